//! Arbitrates the exponent sign of the stationary density with long
//! simulated paths and checks that the library default is the winner.

use refsde::invariant::{select_sign_convention, HistogramOracle, SignConvention};
use refsde::{BarrierConfig, BuiltinDrift, DEFAULT_SIGN_CONVENTION};

#[test]
fn default_convention_wins_histogram_oracle() {
    let barriers = BarrierConfig::two_sided(0.0, 3.0).unwrap();
    let oracle = HistogramOracle::default();
    let mut total = [0.0f64; 2];
    for drift in BuiltinDrift::ALL {
        let sel = select_sign_convention(&drift.spec(), 1.0, 2.0, &barriers, 1.5, &oracle).unwrap();
        println!(
            "{drift}: ks(+1) = {:.8}, ks(-1) = {:.8}, selected {}",
            sel.distance_positive, sel.distance_negative, sel.selected
        );
        total[0] += sel.distance_positive;
        total[1] += sel.distance_negative;
        assert_eq!(sel.selected, DEFAULT_SIGN_CONVENTION, "{drift}");
        assert!(sel.distance(DEFAULT_SIGN_CONVENTION) < 0.05);
    }
    let overall = if total[0] < total[1] {
        SignConvention::Positive
    } else {
        SignConvention::Negative
    };
    assert_eq!(overall, DEFAULT_SIGN_CONVENTION);
}

#[test]
fn one_sided_oracle_skips_non_integrable_side() {
    let barriers = BarrierConfig::one_sided(0.0).unwrap();
    let oracle = HistogramOracle {
        horizon: 1000.0,
        dt: 1e-3,
        ..HistogramOracle::default()
    };
    // sqrt with theta < 0 confines only under the -1 convention.
    let sel = select_sign_convention(&BuiltinDrift::Sqrt.spec(), -1.0, 2.0, &barriers, 0.5, &oracle).unwrap();
    assert!(sel.distance_positive.is_infinite());
    assert_eq!(sel.selected, SignConvention::Negative);
    assert!(sel.distance_negative < 0.05);
}
