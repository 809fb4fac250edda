mod common;

use common::HierarchySample;
use dss_lab::angular::AngularBasis;

#[test]
fn g1_and_g2_solve_their_equations() {
    for dim in [2, 3] {
        let basis = AngularBasis::new(dim, 6);
        for seed in 0..10 {
            let s = HierarchySample::random(dim, 100 * dim as u64 + seed);
            let r1 = s.g1_residual(&basis);
            let r2 = s.g2_residual(&basis);
            assert!(r1 < 1e-9, "dim {dim} seed {seed}: g1 residual {r1:e}");
            assert!(r2 < 1e-9, "dim {dim} seed {seed}: g2 residual {r2:e}");
        }
    }
}
