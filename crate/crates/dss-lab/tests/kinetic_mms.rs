mod common;

use common::mms_run;
use dss_lab::etd::Scheme;

#[test]
fn temporal_orders_on_short_horizon() {
    for re in [0.0, 1.0] {
        for (scheme, order) in [(Scheme::Etd1, 1.0), (Scheme::Etd2, 2.0)] {
            let a = mms_run(re, 16, 8, 0.005, scheme, 0.25);
            let b = mms_run(re, 16, 8, 0.0025, scheme, 0.25);
            assert_eq!(a.dt_halvings + b.dt_halvings, 0);
            let rate = (a.err_f / b.err_f).log2();
            assert!(
                (rate - order).abs() < 0.2,
                "re {re} {scheme:?}: rate {rate}"
            );
            assert!(a.max_mass_defect < 1e-12 && b.max_mass_defect < 1e-12);
        }
    }
}

#[test]
fn spatial_error_plateaus_under_refinement() {
    let coarse = mms_run(0.0, 8, 4, 0.01, Scheme::Etd4, 0.25);
    let fine = mms_run(0.0, 16, 8, 0.01, Scheme::Etd4, 0.25);
    let finer = mms_run(0.0, 32, 16, 0.01, Scheme::Etd4, 0.25);
    assert!(fine.err_f < 1e-3 * coarse.err_f);
    assert!((fine.err_f - finer.err_f).abs() < 1e-8);
    assert!((fine.err_u - finer.err_u).abs() < 1e-8);
}
