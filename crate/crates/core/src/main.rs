use clap::Parser;

fn main() {
    let cli = refsde::cli::Cli::parse();
    if let Err(e) = refsde::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
