use std::f64::consts::PI;

use dss_lab::forcing::TrigForcing;
use dss_lab::harness::{ExperimentConfig, Subcommand};
use dss_lab::kinetic::{KineticConfig, KineticSolver, KineticState};
use dss_lab::limit::{loglog_fit, InitialDensity, InitialVelocity, LimitConfig};
use dss_lab::spectral::{Grid2D, Snapshot};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshot_bytes_round_trip(
        n in 1usize..9,
        name in "[a-z_0-9]{0,12}",
        t in -1e3..1e3f64,
        seed in proptest::collection::vec(-1e6..1e6f64, 64),
    ) {
        let values: Vec<f64> = (0..n * n).map(|i| seed[i % seed.len()] * (i as f64 + 1.0)).collect();
        let s = Snapshot { n, name, t, values };
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 4 + 4 + 4 + s.name.len() + 8 + 8 * n * n);
        prop_assert_eq!(&Snapshot::read(&mut buf.as_slice()).unwrap(), &s);
        let cut = buf.len() / 2;
        prop_assert!(Snapshot::read(&mut &buf[..cut]).is_err());
    }

    #[test]
    fn loglog_fit_is_exact_on_power_laws(
        slope in -3.0..3.0f64,
        scale in 1e-6..1e3f64,
        x0 in 0.01..1.0f64,
        k in 3usize..7,
    ) {
        let x: Vec<f64> = (0..k).map(|i| x0 * 0.5f64.powi(i as i32)).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(slope)).collect();
        let fit = loglog_fit(&x, &y);
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-8);
        prop_assert!(fit.slope_ci95 < 1e-8);
    }

    #[test]
    fn random_density_is_normalized_and_positive(
        seed in any::<u64>(),
        count in 1usize..6,
        kmax in 1i64..4,
        amp in 0.0..0.9f64,
    ) {
        let grid = Grid2D::new(16).unwrap();
        let rho = InitialDensity::Random { count, kmax, amp }.to_spectral(&grid, seed).unwrap();
        let nodal = grid.inverse(&rho);
        let mean = nodal.iter().sum::<f64>() / nodal.len() as f64;
        prop_assert!((mean * 2.0 * PI - 1.0).abs() < 1e-13);
        prop_assert!(nodal.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn random_velocity_is_divergence_free(
        seed in any::<u64>(),
        count in 1usize..6,
        kmax in 1i64..4,
        amp in 0.0..2.0f64,
    ) {
        let grid = Grid2D::new(16).unwrap();
        let u = InitialVelocity::Random { count, kmax, amp }.to_spectral(&grid, seed).unwrap();
        prop_assert!(grid.l2_norm(&grid.divergence(&u)) < 1e-12);
    }

    #[test]
    fn experiment_config_round_trips(seed in any::<u64>(), idx in 0usize..5, dir in "[a-z]{1,8}") {
        let sub = Subcommand::ALL[idx];
        prop_assert_eq!(sub.name().parse::<Subcommand>().unwrap(), sub);
        let cfg = ExperimentConfig {
            subcommand: Some(sub),
            seed,
            out_dir: dir.into(),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn kinetic_steps_conserve_mass(seed in any::<u64>(), amp in 0.0..2.0f64, re in prop::sample::select(vec![0.0, 1.0])) {
        let params = LimitConfig::standard(re).params;
        let grid = Grid2D::new(8).unwrap();
        let rho = InitialDensity::Random { count: 3, kmax: 2, amp: 0.5 }.to_spectral(&grid, seed).unwrap();
        let mut s = KineticState::from_density(params, grid, 6, &rho).unwrap();
        let forcing = TrigForcing::preset("cellular", amp, 0.0, 0.0).unwrap();
        let cfg = KineticConfig { n: 8, m_max: 6, dt: 0.01, ..Default::default() };
        let solver = KineticSolver::new(cfg, &forcing, None).unwrap();
        let sum = solver.run(&mut s, 0.1, 0.05, |_, _| Ok(())).unwrap();
        prop_assert!(sum.max_mass_defect < 1e-12);
        prop_assert!(s.mass_defect() < 1e-12);
    }
}
