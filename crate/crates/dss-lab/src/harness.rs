//! Experiment configuration, drivers and reports behind the `dss-lab` CLI.
//!
//! Each `cmd_*` function is pure: it turns a configuration into a report.
//! [`execute`] runs one subcommand, writes its tables, snapshots, report and
//! manifest into the output directory and returns the verdict.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{moment_integral, AngularBasis};
use crate::closure::{
    closure_stress_orders, deviatoric, g1_project, g2_project, ordered_stress_orders, sigma1,
    sigma1_g1_closed, sigma1_g2_closed_deviatoric, sigma2, sigma2_isotropic_closed,
    sigma2_rho1_g1_closed, ClosureJet,
};
use crate::error::{DssError, Result};
use crate::forcing::ForcingSpec;
use crate::kinetic::{KineticConfig, KineticDiagnostics, KineticSolver, KineticState, RunSummary};
use crate::limit::{
    boussinesq_ns_sweep, boussinesq_sweep, limit_sweep, BoussinesqSweep, InitialDensity,
    InitialVelocity, LimitConfig, LimitSweep, LogLogFit,
};
use crate::ordered::{HierarchyConfig, HierarchySolver};
use crate::params::{
    omega, predict_viscometric, second_order_coeffs, third_order_coeffs, ModelParams,
    OrderedFluidCoefficients, Peclet, ViscometricPrediction,
};
use crate::rheometry::{
    epsilon_sweep_extrapolate, shear_curvature, write_csv, CurvatureCheck, FlowKind, ImposedFlow,
    SweepComparison,
};
use crate::spectral::{Grid2D, Snapshot};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_THRESHOLD: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Exit code for a failed run: solver failures map to 3, everything else to 1.
pub fn exit_code_for(err: &DssError) -> i32 {
    if err.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Coeffs,
    Rheometry,
    Simulate,
    Convergence,
    BoussinesqCompare,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] = [
        Subcommand::Coeffs,
        Subcommand::Rheometry,
        Subcommand::Simulate,
        Subcommand::Convergence,
        Subcommand::BoussinesqCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Coeffs => "coeffs",
            Subcommand::Rheometry => "rheometry",
            Subcommand::Simulate => "simulate",
            Subcommand::Convergence => "convergence",
            Subcommand::BoussinesqCompare => "boussinesq-compare",
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = DssError;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DssError::InvalidParams(format!("unknown subcommand '{s}'")))
    }
}

/// Complete experiment description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand the configuration was last run with.
    pub subcommand: Option<Subcommand>,
    /// Seed of every randomized field.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub coeffs: CoeffsConfig,
    pub rheometry: RheometryConfig,
    pub simulate: SimulateConfig,
    pub convergence: ConvergenceConfig,
    pub boussinesq: BoussinesqConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            subcommand: None,
            seed: 0,
            out_dir: PathBuf::from("dss-out"),
            coeffs: CoeffsConfig::default(),
            rheometry: RheometryConfig::default(),
            simulate: SimulateConfig::default(),
            convergence: ConvergenceConfig::default(),
            boussinesq: BoussinesqConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffsConfig {
    pub params: ModelParams,
    /// Angular degree of the quadrature oracle.
    pub degree: usize,
    /// Largest admissible |closed - oracle| of a cross-check row.
    pub tolerance: f64,
}

impl Default for CoeffsConfig {
    fn default() -> Self {
        CoeffsConfig {
            params: ModelParams::passive(3, 0.1, 0.1),
            degree: 8,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSpec {
    pub rate: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RheometryConfig {
    pub params: ModelParams,
    pub degree: usize,
    pub eps: Vec<f64>,
    pub flows: Vec<FlowSpec>,
    /// Step of the oscillatory integration.
    pub dt: f64,
    /// Relative error threshold of every extrapolated quantity.
    pub threshold: f64,
    /// Shear-thinning curvature check; skipped unless u0_swim = 0.
    pub curvature: Option<CurvatureSpec>,
}

impl Default for RheometryConfig {
    fn default() -> Self {
        RheometryConfig {
            params: ModelParams::passive(3, 0.1, 0.1),
            degree: 8,
            eps: vec![0.2, 0.1, 0.05, 0.025],
            flows: vec![
                FlowSpec {
                    kind: FlowKind::SimpleShear,
                    rate: 1.0,
                },
                FlowSpec {
                    kind: FlowKind::Elongation,
                    rate: 1.0,
                },
                FlowSpec {
                    kind: FlowKind::OscillatoryShear,
                    rate: 1.0,
                },
            ],
            dt: 0.01,
            threshold: 0.02,
            curvature: Some(CurvatureSpec {
                rate: 1.0,
                threshold: 0.05,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ModelParams,
    pub kinetic: KineticConfig,
    pub t_end: f64,
    /// Time between diagnostics records and snapshots.
    pub interval: f64,
    pub forcing: ForcingSpec,
    pub rho_init: InitialDensity,
    /// Used when re > 0.
    pub u_init: InitialVelocity,
    /// Order of well-prepared data built from the hierarchy; `None` starts
    /// from the isotropic distribution rho / omega.
    pub well_prepared_order: Option<usize>,
    pub snapshots: bool,
    /// Grid row x2 = row / N of the CSV slices.
    pub slice_row: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let l = LimitConfig::standard(0.0);
        SimulateConfig {
            params: l.params,
            kinetic: KineticConfig::default(),
            t_end: 0.5,
            interval: 0.05,
            forcing: l.forcing,
            rho_init: l.rho_init,
            u_init: l.u_init,
            well_prepared_order: Some(2),
            snapshots: true,
            slice_row: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    #[serde(flatten)]
    pub limit: LimitConfig,
    /// Also sweeps ill-prepared data (f = rho / omega) as a control.
    pub ill_prepared_control: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            limit: LimitConfig::standard(0.0),
            ill_prepared_control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoussinesqConfig {
    /// re = 0 compares Stokes solutions at `times`, re > 0 compares
    /// Navier-Stokes trajectories up to `t_end`.
    pub params: ModelParams,
    pub n: usize,
    pub forcing: ForcingSpec,
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
    pub tol: f64,
    pub max_iterations: usize,
    pub u_init: InitialVelocity,
    pub t_end: f64,
    pub dt: f64,
    pub interval: f64,
    pub threshold: f64,
}

impl Default for BoussinesqConfig {
    fn default() -> Self {
        let l = LimitConfig::standard(0.0);
        BoussinesqConfig {
            params: l.params,
            n: 32,
            forcing: l.forcing,
            eps: l.eps,
            times: vec![0.0, 0.25, 0.5],
            tol: 1e-12,
            max_iterations: 30,
            u_init: l.u_init,
            t_end: 0.5,
            dt: 3.125e-4,
            interval: 0.025,
            threshold: 1.8,
        }
    }
}

// ---------------------------------------------------------------- coeffs

/// One closed-form expression against its quadrature evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    pub closed: f64,
    pub oracle: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffsReport {
    pub params: ModelParams,
    pub second_order: OrderedFluidCoefficients,
    pub third_order: OrderedFluidCoefficients,
    pub prediction: ViscometricPrediction,
    /// Third-order prediction; requires u0_swim = 0.
    pub prediction_third: Option<ViscometricPrediction>,
    /// nu10 / |nu20| (d = 3, nu20 != 0).
    pub normal_stress_ratio: Option<f64>,
    pub cross_checks: Vec<CrossCheck>,
    pub max_cross_check_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn matrix_check(name: &str, closed: &Matrix3<f64>, oracle: &Matrix3<f64>) -> CrossCheck {
    CrossCheck {
        name: name.into(),
        closed: closed.norm(),
        oracle: oracle.norm(),
        abs_err: (closed - oracle).amax(),
    }
}

fn random_trace_free(rng: &mut ChaCha8Rng, dim: usize) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = rng.gen_range(-1.0..1.0);
        }
    }
    let tr = g.trace() / dim as f64;
    for i in 0..dim {
        g[(i, i)] -= tr;
    }
    g
}

fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize) -> Matrix3<f64> {
    let g = random_trace_free(rng, dim);
    (g + g.transpose()) * 0.5
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for i in 0..dim {
        v[i] = rng.gen_range(-1.0..1.0);
    }
    v
}

/// Coefficients, viscometric predictions and the quadrature cross-check table.
pub fn cmd_coeffs(cfg: &CoeffsConfig, seed: u64) -> Result<CoeffsReport> {
    let m = cfg.params;
    m.validate()?;
    let dim = m.dim;
    let second = second_order_coeffs(&m);
    let third = third_order_coeffs(&m);
    let prediction = predict_viscometric(&second, m.eps, 2, m.u0_swim)?;
    let prediction_third = if m.u0_swim == 0.0 {
        Some(predict_viscometric(&third, m.eps, 3, 0.0)?)
    } else {
        None
    };
    let normal_stress_ratio = prediction
        .nu20
        .filter(|v| *v != 0.0)
        .map(|nu20| prediction.nu10 / nu20.abs());

    let basis = AngularBasis::new(dim, cfg.degree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    let moments: &[&[usize]] = &[
        &[0, 0],
        &[0, 0, 1, 1],
        &[0, 0, 0, 0],
        &[0, 0, 1, 1, 1, 1],
        &[0, 0, 0, 0, 0, 0],
    ];
    for idx in moments {
        let closed = moment_integral(dim, idx)?;
        let oracle = basis.quadrature_fn(|n| idx.iter().map(|&i| n[i]).product());
        let label: String = idx
            .iter()
            .map(|i| format!("n{}", i + 1))
            .collect::<Vec<_>>()
            .join(" ");
        rows.push(CrossCheck {
            name: format!("moment {label}"),
            closed,
            oracle,
            abs_err: (closed - oracle).abs(),
        });
    }

    let rho0 = 1.0 / omega(dim) * rng.gen_range(0.5..1.5);
    let g = random_trace_free(&mut rng, dim);
    let jet = ClosureJet {
        rho0,
        grad_rho0: random_vector(&mut rng, dim),
        hess_rho0: random_symmetric(&mut rng, dim),
        grad_u0: g,
        grad_d0: [0, 1, 2].map(|k| {
            if k < dim {
                random_symmetric(&mut rng, dim)
            } else {
                Matrix3::zeros()
            }
        }),
        a2_prime: random_symmetric(&mut rng, dim),
        rho1: rng.gen_range(-0.1..0.1),
        grad_rho1: random_vector(&mut rng, dim),
        grad_u1: random_trace_free(&mut rng, dim),
    };
    let g1 = g1_project(&basis, &m, &jet);
    rows.push(matrix_check(
        "sigma1[g1]",
        &sigma1_g1_closed(&m, rho0, &g),
        &sigma1(&basis, &m, &g1),
    ));
    rows.push(matrix_check(
        "sigma2[rho0]",
        &sigma2_isotropic_closed(&m, rho0, &g),
        &sigma2(&basis, &m, &basis.constant(rho0), &g),
    ));
    rows.push(matrix_check(
        "sigma2[rho1 + g1]",
        &sigma2_rho1_g1_closed(&m, &jet),
        &sigma2(&basis, &m, &g1.add(&basis.constant(jet.rho1)), &g),
    ));
    let g2 = g2_project(&basis, &m, &jet);
    rows.push(matrix_check(
        "dev sigma1[g2]",
        &sigma1_g2_closed_deviatoric(&m, &jet),
        &deviatoric(&sigma1(&basis, &m, &g2), dim),
    ));

    // stress of each order from the closures against the third-order law
    let homogeneous = ModelParams {
        pe: Peclet::Infinite,
        u0_swim: 0.0,
        ..m
    };
    let history = [
        g,
        random_trace_free(&mut rng, dim),
        random_trace_free(&mut rng, dim),
    ];
    let from_closures = closure_stress_orders(&basis, &homogeneous, &history)?;
    let from_law = ordered_stress_orders(&third_order_coeffs(&homogeneous), &history)?;
    for (k, (a, b)) in from_law.iter().zip(&from_closures).enumerate() {
        rows.push(matrix_check(&format!("stress order eps^{k}"), a, b));
    }

    let max_err = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
    Ok(CoeffsReport {
        params: m,
        second_order: second,
        third_order: third,
        prediction,
        prediction_third,
        normal_stress_ratio,
        cross_checks: rows,
        max_cross_check_err: max_err,
        tolerance: cfg.tolerance,
        passed: max_err < cfg.tolerance,
    })
}

// ------------------------------------------------------------- rheometry

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantityVerdict {
    pub flow: FlowKind,
    pub name: String,
    pub measured: f64,
    pub std_error: f64,
    pub predicted: f64,
    pub rel_err: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RheometryReport {
    pub sweeps: Vec<SweepComparison>,
    pub curvature: Option<CurvatureCheck>,
    pub verdicts: Vec<QuantityVerdict>,
    pub passed: bool,
}

pub fn cmd_rheometry(cfg: &RheometryConfig) -> Result<RheometryReport> {
    let m = cfg.params;
    m.validate()?;
    let basis = AngularBasis::new(m.dim, cfg.degree);
    let mut verdicts = Vec::new();
    let mut sweeps = Vec::new();
    for f in &cfg.flows {
        let flow = ImposedFlow::new(f.kind, f.rate, m.dim)?;
        let sweep = epsilon_sweep_extrapolate(&flow, &m, &basis, &cfg.eps, cfg.dt)?;
        for q in &sweep.quantities {
            verdicts.push(QuantityVerdict {
                flow: f.kind,
                name: q.name.clone(),
                measured: q.leading,
                std_error: q.std_error,
                predicted: q.predicted,
                rel_err: q.rel_err,
                threshold: cfg.threshold,
                passed: q.rel_err <= cfg.threshold,
            });
        }
        sweeps.push(sweep);
    }
    let curvature = match cfg.curvature {
        Some(c) if m.u0_swim == 0.0 && m.lambda > 0.0 => {
            let hom = ModelParams {
                pe: Peclet::Infinite,
                ..m
            };
            let check = shear_curvature(&hom, &basis, c.rate, &cfg.eps)?;
            verdicts.push(QuantityVerdict {
                flow: FlowKind::SimpleShear,
                name: "eta curvature/eps^2".into(),
                measured: check.extrapolated,
                std_error: 0.0,
                predicted: check.predicted,
                rel_err: check.rel_err,
                threshold: c.threshold,
                passed: check.rel_err <= c.threshold,
            });
            Some(check)
        }
        _ => None,
    };
    let passed = verdicts.iter().all(|v| v.passed);
    Ok(RheometryReport {
        sweeps,
        curvature,
        verdicts,
        passed,
    })
}

// -------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub summary: RunSummary,
    pub min_f: f64,
    pub max_f: f64,
    /// Mass defect below 1e-12 and min f >= -1e-6 max f.
    pub passed: bool,
}

/// Initial kinetic state of a simulation.
pub fn simulate_initial_state(cfg: &SimulateConfig, seed: u64) -> Result<KineticState> {
    let grid = Grid2D::new(cfg.kinetic.n)?;
    let forcing = cfg.forcing.build()?;
    let rho = cfg.rho_init.to_spectral(&grid, seed)?;
    let u = if cfg.params.is_navier_stokes() {
        Some(cfg.u_init.to_spectral(&grid, seed)?)
    } else {
        None
    };
    match cfg.well_prepared_order {
        Some(order) => {
            let hcfg = HierarchyConfig {
                n: cfg.kinetic.n,
                dt: cfg.kinetic.dt,
                ..Default::default()
            };
            let hs = HierarchySolver::new(hcfg, &forcing)?;
            let h0 = hs.initial_state(cfg.params, grid, &rho, u.as_ref())?;
            hs.well_prepared_f0(&h0, cfg.params.eps, order, cfg.kinetic.m_max)
        }
        None => {
            let mut s = KineticState::from_density(cfg.params, grid, cfg.kinetic.m_max, &rho)?;
            if let Some(u) = u {
                s.u = u;
            }
            Ok(s)
        }
    }
}

/// Runs the kinetic solver, handing every recorded state to `hook`.
pub fn cmd_simulate<H>(cfg: &SimulateConfig, seed: u64, mut hook: H) -> Result<SimulateReport>
where
    H: FnMut(&KineticState, &KineticDiagnostics) -> Result<()>,
{
    cfg.params.validate_coupled()?;
    cfg.kinetic.validate()?;
    let forcing = cfg.forcing.build()?;
    let mut state = simulate_initial_state(cfg, seed)?;
    let solver = KineticSolver::new(cfg.kinetic, &forcing, None)?;
    let summary = solver.run(&mut state, cfg.t_end, cfg.interval, |s, d| hook(s, d))?;
    let min_f = summary
        .records
        .iter()
        .map(|d| d.min_f)
        .fold(f64::INFINITY, f64::min);
    let max_f = summary
        .records
        .iter()
        .map(|d| d.max_f)
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = summary.max_mass_defect < 1e-12 && min_f >= -1e-6 * max_f;
    Ok(SimulateReport {
        summary,
        min_f,
        max_f,
        passed,
    })
}

// ----------------------------------------------------------- convergence

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeVerdict {
    pub norm: String,
    pub fit: LogLogFit,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRow {
    pub eps: f64,
    pub grad_u: f64,
    pub u: f64,
    pub rho: f64,
    pub grad_rho: f64,
    /// rho + grad_rho, the graded density norm.
    pub rho_total: f64,
}

/// Stokes-type bound ||grad u|| <= C ||rho_f|| along every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Largest a priori constant over the sweep.
    pub constant: f64,
    pub max_ratio: f64,
    /// max ||grad u|| / (||h||_{H^-1} + ||sigma1|| / eps); Stokes only.
    pub max_energy_ratio: Option<f64>,
    /// False for Navier-Stokes runs, where the bound is reported only.
    pub enforced: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub navier_stokes: bool,
    pub smallness: f64,
    pub smallness_limit: f64,
    pub table: Vec<ErrorRow>,
    pub slopes: Vec<SlopeVerdict>,
    pub bound: BoundCheck,
    pub max_mass_defect: f64,
    pub max_energy_residual: f64,
    pub min_f: f64,
    pub sweep: LimitSweep,
    /// Slopes of the ill-prepared control, when requested.
    pub control: Option<Vec<SlopeVerdict>>,
    /// True when every control slope falls below the threshold.
    pub control_degraded: Option<bool>,
    pub passed: bool,
}

fn slope_verdicts(sweep: &LimitSweep, threshold: f64) -> Vec<SlopeVerdict> {
    let v = |norm: &str, fit: LogLogFit| SlopeVerdict {
        norm: norm.into(),
        fit,
        threshold,
        passed: fit.passes(threshold),
    };
    let mut out = vec![v("grad_u L2t L2x", sweep.fit_grad_u)];
    if sweep.config.params.is_navier_stokes() {
        out.push(v("u LinfT L2x", sweep.fit_u));
    }
    out.push(v("rho LinfT L2x + grad rho L2t L2x", sweep.fit_rho));
    out
}

pub fn cmd_convergence(cfg: &ConvergenceConfig, seed: u64) -> Result<ConvergenceReport> {
    let limit = LimitConfig {
        seed,
        ..cfg.limit.clone()
    };
    if limit.eps.len() < 4 {
        return Err(DssError::InvalidParams(
            "a convergence study needs at least four eps values".into(),
        ));
    }
    let smallness = limit.smallness()?;
    let sweep = limit_sweep(&limit)?;
    let slopes = slope_verdicts(&sweep, limit.threshold);
    let runs = &sweep.runs;
    let constant = runs.iter().map(|r| r.bound_constant).fold(0.0, f64::max);
    let max_ratio = runs
        .iter()
        .map(|r| r.max_grad_u_over_rho)
        .fold(0.0, f64::max);
    let navier_stokes = limit.params.is_navier_stokes();
    let max_energy_ratio =
        (!navier_stokes).then(|| runs.iter().map(|r| r.max_bound_ratio).fold(0.0, f64::max));
    let bound = BoundCheck {
        constant,
        max_ratio,
        max_energy_ratio,
        enforced: !navier_stokes,
        passed: runs
            .iter()
            .all(|r| r.max_grad_u_over_rho <= r.bound_constant)
            && max_energy_ratio.map_or(true, |r| r <= 1.0),
    };
    let table = runs
        .iter()
        .map(|r| ErrorRow {
            eps: r.eps,
            grad_u: r.grad_u_err,
            u: r.u_err,
            rho: r.rho_err,
            grad_rho: r.grad_rho_err,
            rho_total: r.rho_err + r.grad_rho_err,
        })
        .collect();
    let (control, control_degraded) = if cfg.ill_prepared_control {
        let ill = LimitConfig {
            well_prepared_order: 0,
            ..limit.clone()
        };
        let v = slope_verdicts(&limit_sweep(&ill)?, limit.threshold);
        let degraded = v.iter().all(|s| !s.passed);
        (Some(v), Some(degraded))
    } else {
        (None, None)
    };
    let passed = slopes.iter().all(|s| s.passed) && (bound.passed || !bound.enforced);
    Ok(ConvergenceReport {
        navier_stokes,
        smallness,
        smallness_limit: 1.0 / limit.smallness_c0,
        table,
        slopes,
        bound,
        max_mass_defect: runs.iter().map(|r| r.max_mass_defect).fold(0.0, f64::max),
        max_energy_residual: runs
            .iter()
            .map(|r| r.max_energy_residual)
            .fold(0.0, f64::max),
        min_f: runs.iter().map(|r| r.min_f).fold(f64::INFINITY, f64::min),
        sweep,
        control,
        control_degraded,
        passed,
    })
}

// ------------------------------------------------------------ boussinesq

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoussinesqReport {
    pub navier_stokes: bool,
    pub sweep: BoussinesqSweep,
    pub slopes: Vec<SlopeVerdict>,
    /// Outer iterations at the largest eps (Stokes only).
    pub iterations_at_largest_eps: Option<usize>,
    pub passed: bool,
}

pub fn cmd_boussinesq_compare(cfg: &BoussinesqConfig, seed: u64) -> Result<BoussinesqReport> {
    let p = cfg.params;
    p.validate_coupled()?;
    if cfg.eps.len() < 4 {
        return Err(DssError::InvalidParams(
            "a Boussinesq comparison needs at least four eps values".into(),
        ));
    }
    if cfg.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DssError::InvalidParams(
            "eps list must be strictly decreasing".into(),
        ));
    }
    let forcing = cfg.forcing.build()?;
    let navier_stokes = p.is_navier_stokes();
    let sweep = if navier_stokes {
        let grid = Grid2D::new(cfg.n)?;
        let u = cfg.u_init.to_spectral(&grid, seed)?;
        boussinesq_ns_sweep(
            &p,
            cfg.n,
            &forcing,
            &u,
            &cfg.eps,
            cfg.t_end,
            cfg.dt,
            cfg.interval,
        )?
    } else {
        boussinesq_sweep(
            &p,
            cfg.n,
            &forcing,
            &cfg.eps,
            &cfg.times,
            cfg.tol,
            cfg.max_iterations,
        )?
    };
    let v = |norm: &str, fit: LogLogFit| SlopeVerdict {
        norm: norm.into(),
        fit,
        threshold: cfg.threshold,
        passed: fit.passes(cfg.threshold),
    };
    let mut slopes = vec![v("u_bous - u_hier H1", sweep.fit_h1)];
    if let Some(f) = sweep.fit_residual_bous {
        slopes.push(v("residual Boussinesq H-1", f));
    }
    if let Some(f) = sweep.fit_residual_hier {
        slopes.push(v("residual hierarchical H-1", f));
    }
    let iterations_at_largest_eps = (!navier_stokes).then(|| sweep.runs[0].iterations);
    let passed = slopes.iter().all(|s| s.passed)
        && iterations_at_largest_eps.map_or(true, |i| i <= cfg.max_iterations);
    Ok(BoussinesqReport {
        navier_stokes,
        sweep,
        slopes,
        iterations_at_largest_eps,
        passed,
    })
}

// ---------------------------------------------------------------- output

/// Written next to every report; rerun with
/// `dss-lab <subcommand> --config <out>/config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: Subcommand,
    /// Which solver produced the outputs: angular, kinetic, hierarchy or
    /// boussinesq.
    pub solver: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub passed: bool,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub diagnostics: Vec<KineticDiagnostics>,
}

/// Verdict and human-readable summary of one executed subcommand.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub out_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_THRESHOLD
        }
    }
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn relative(&self) -> Vec<String> {
        self.outputs
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
            .collect()
    }
}

fn fmt_slopes(s: &mut String, slopes: &[SlopeVerdict]) {
    for v in slopes {
        let _ = writeln!(
            s,
            "  slope {:<36} {:>7.3} +- {:.3} (threshold {}) {}",
            v.norm,
            v.fit.slope,
            v.fit.slope_ci95,
            v.threshold,
            if v.passed { "pass" } else { "FAIL" }
        );
    }
}

/// Runs one subcommand and writes its outputs under `cfg.out_dir`.
pub fn execute(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Outcome> {
    let cfg = ExperimentConfig {
        subcommand: Some(sub),
        ..cfg.clone()
    };
    let mut w = Writer::new(&cfg.out_dir)?;
    let mut s = String::new();
    let mut diagnostics = Vec::new();
    let (passed, solver) = match sub {
        Subcommand::Coeffs => {
            let r = cmd_coeffs(&cfg.coeffs, cfg.seed)?;
            let c = r.second_order.to_homogeneous();
            let _ = writeln!(s, "second order (homogeneous): eta0 {} eta1 {:.6e} mu0 {:.6e} gamma1 {:.6e} gamma2 {:.6e}", c.eta0, c.eta1, c.mu0, c.gamma1, c.gamma2);
            if let Some(t) = r.third_order.third {
                let _ = writeln!(
                    s,
                    "third order: kappa1 {:.6e} kappa2 {:.6e} kappa3 {:.6e} mu1 {:.6e} mu2 {:.6e}",
                    t.kappa1, t.kappa2, t.kappa3, t.mu1, t.mu2
                );
            }
            let p = &r.prediction;
            let _ = writeln!(s, "zero-shear viscosity {:.12}", p.zero_shear_viscosity);
            let _ = writeln!(
                s,
                "nu10 {:.6e} nu20 {:?} eta_E {:.6e} + {:.6e} kappa phase {:.6e}",
                p.nu10, p.nu20, p.elongational_intercept, p.elongational_slope, p.phase_shift
            );
            if let Some(ratio) = r.normal_stress_ratio {
                let _ = writeln!(s, "nu10 / |nu20| = {ratio:.12}");
            }
            for row in &r.cross_checks {
                let _ = writeln!(
                    s,
                    "  check {:<26} closed {:>14.6e} oracle {:>14.6e} err {:.2e}",
                    row.name, row.closed, row.oracle, row.abs_err
                );
            }
            let _ = writeln!(
                s,
                "max cross-check error {:.2e} (tolerance {:.0e})",
                r.max_cross_check_err, r.tolerance
            );
            w.csv("cross_checks.csv", &r.cross_checks)?;
            w.json("report.json", &r)?;
            (r.passed, "angular")
        }
        Subcommand::Rheometry => {
            let r = cmd_rheometry(&cfg.rheometry)?;
            for v in &r.verdicts {
                let _ = writeln!(
                    s,
                    "  {:?} {:<22} measured {:>13.6e} predicted {:>13.6e} rel err {:.2e} {}",
                    v.flow,
                    v.name,
                    v.measured,
                    v.predicted,
                    v.rel_err,
                    if v.passed { "pass" } else { "FAIL" }
                );
            }
            write_csv(&w.path("rheometry.csv"), &r.sweeps)?;
            w.csv("summary.csv", &r.verdicts)?;
            w.json("report.json", &r)?;
            (r.passed, "angular")
        }
        Subcommand::Simulate => {
            let sim = &cfg.simulate;
            let snap_dir = cfg.out_dir.join("snapshots");
            if sim.snapshots {
                fs::create_dir_all(&snap_dir)?;
            }
            let mut frame = 0usize;
            let mut files = Vec::new();
            let r = cmd_simulate(sim, cfg.seed, |st, _| {
                if sim.snapshots {
                    let u = &st.u;
                    for (name, field) in [
                        ("rho", st.density()),
                        ("u1", u.c[0].clone()),
                        ("u2", u.c[1].clone()),
                    ] {
                        let snap = Snapshot::new(&st.grid, name, st.t, &field);
                        let bin = snap_dir.join(format!("{name}_{frame:04}.bin"));
                        snap.save(&bin)?;
                        files.push(bin);
                        if name == "rho" {
                            let csv = snap_dir.join(format!("{name}_{frame:04}_slice.csv"));
                            snap.write_slice_csv(&csv, sim.slice_row)?;
                            files.push(csv);
                        }
                    }
                }
                frame += 1;
                Ok(())
            })?;
            w.outputs.extend(files);
            w.csv("diagnostics.csv", &r.summary.records)?;
            let _ = writeln!(
                s,
                "steps {} final t {} dt halvings {}",
                r.summary.steps, r.summary.final_time, r.summary.dt_halvings
            );
            let _ = writeln!(
                s,
                "max mass defect {:.2e} max energy residual {:.2e}",
                r.summary.max_mass_defect, r.summary.max_energy_residual
            );
            let _ = writeln!(s, "min f {:.4e} max f {:.4e}", r.min_f, r.max_f);
            diagnostics = r.summary.records.clone();
            w.json("report.json", &r)?;
            (r.passed, "kinetic")
        }
        Subcommand::Convergence => {
            let r = cmd_convergence(&cfg.convergence, cfg.seed)?;
            let _ = writeln!(
                s,
                "smallness {:.4} (limit {:.4})",
                r.smallness, r.smallness_limit
            );
            for row in &r.table {
                let _ = writeln!(
                    s,
                    "  eps {:<7} grad u {:.4e} u {:.4e} rho {:.4e} grad rho {:.4e}",
                    row.eps, row.grad_u, row.u, row.rho, row.grad_rho
                );
            }
            fmt_slopes(&mut s, &r.slopes);
            let _ = writeln!(
                s,
                "bound: max ||grad u||/||rho_f|| {:.4} <= C = {:.4}; energy ratio {:?} {}",
                r.bound.max_ratio,
                r.bound.constant,
                r.bound.max_energy_ratio,
                match (r.bound.enforced, r.bound.passed) {
                    (false, _) => "(reported only)",
                    (true, true) => "pass",
                    (true, false) => "FAIL",
                }
            );
            let _ = writeln!(
                s,
                "max mass defect {:.2e} max energy residual {:.2e} min f {:.3e}",
                r.max_mass_defect, r.max_energy_residual, r.min_f
            );
            if let Some(c) = &r.control {
                let _ = writeln!(s, "ill-prepared control:");
                fmt_slopes(&mut s, c);
            }
            w.csv("convergence.csv", &r.table)?;
            w.json("report.json", &r)?;
            (r.passed, "kinetic")
        }
        Subcommand::BoussinesqCompare => {
            let r = cmd_boussinesq_compare(&cfg.boussinesq, cfg.seed)?;
            for run in &r.sweep.runs {
                let _ = writeln!(
                    s,
                    "  eps {:<7} H1 diff {:.4e} iterations {} residuals {:?} {:?}",
                    run.eps, run.h1_diff, run.iterations, run.residual_bous, run.residual_hier
                );
            }
            fmt_slopes(&mut s, &r.slopes);
            w.csv("boussinesq.csv", &r.sweep.runs)?;
            w.json("report.json", &r)?;
            (r.passed, "boussinesq")
        }
    };
    w.json("config.json", &cfg)?;
    let exit_code = if passed { EXIT_PASS } else { EXIT_THRESHOLD };
    let mut outputs = w.relative();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "dss-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: sub,
        solver: solver.into(),
        config: cfg.clone(),
        outputs,
        passed,
        exit_code,
        diagnostics,
    };
    w.json("manifest.json", &manifest)?;
    let _ = writeln!(
        s,
        "{}: {}",
        sub.name(),
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(Outcome {
        passed,
        summary: s,
        out_dir: cfg.out_dir.clone(),
        outputs: w.outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let partial =
            ExperimentConfig::from_json(r#"{"seed": 5, "convergence": {"n": 16}}"#).unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.convergence.limit.n, 16);
        assert_eq!(partial.convergence.limit.m_max, 32);
        assert!(ExperimentConfig::from_json(r#"{"sed": 5}"#).is_err());
    }

    #[test]
    fn passive_coefficients_report() {
        let r = cmd_coeffs(&CoeffsConfig::default(), 0).unwrap();
        assert!((r.normal_stress_ratio.unwrap() - 7.0).abs() < 1e-12);
        assert!(r.passed, "max err {:e}", r.max_cross_check_err);
        assert!(r.cross_checks.len() >= 12);
    }

    #[test]
    fn coefficient_cross_checks_hold_in_2d_and_for_swimmers() {
        for params in [
            ModelParams {
                theta: -1.5,
                u0_swim: 0.7,
                pe: Peclet::Finite(2.0),
                ..ModelParams::passive(2, 0.1, 0.3)
            },
            ModelParams {
                theta: 2.0,
                u0_swim: 0.4,
                ..ModelParams::passive(3, 0.1, 0.2)
            },
        ] {
            let r = cmd_coeffs(
                &CoeffsConfig {
                    params,
                    ..Default::default()
                },
                11,
            )
            .unwrap();
            assert!(
                r.passed,
                "dim {}: max err {:e}",
                params.dim, r.max_cross_check_err
            );
            assert!(r.prediction_third.is_none());
        }
    }

    #[test]
    fn zero_lambda_gives_newtonian_block() {
        let params = ModelParams::passive(3, 0.1, 0.0);
        let r = cmd_coeffs(
            &CoeffsConfig {
                params,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let p = r.prediction;
        assert_eq!(p.zero_shear_viscosity, 1.0);
        assert_eq!(
            [p.nu10, p.nu20.unwrap(), p.elongational_slope, p.phase_shift],
            [0.0; 4]
        );
        assert!(r.normal_stress_ratio.is_none());
    }

    #[test]
    fn zero_rate_rheometry_is_newtonian() {
        let cfg = RheometryConfig {
            flows: vec![FlowSpec {
                kind: FlowKind::SimpleShear,
                rate: 0.0,
            }],
            curvature: None,
            ..Default::default()
        };
        let r = cmd_rheometry(&cfg).unwrap();
        assert!(r.verdicts.is_empty());
        for m in &r.sweeps[0].measurements {
            assert!(m.stress.iter().flatten().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn solver_failures_map_to_exit_three() {
        let e = DssError::AtEpsilon {
            eps: 0.1,
            source: Box::new(DssError::StepUnderflow {
                dt: 1e-9,
                floor: 1e-8,
            }),
        };
        assert_eq!(exit_code_for(&e), EXIT_SOLVER);
        assert_eq!(
            exit_code_for(&DssError::InvalidParams("x".into())),
            EXIT_USAGE
        );
    }
}
