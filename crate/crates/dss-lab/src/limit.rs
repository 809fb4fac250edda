//! Kinetic solutions against the hierarchical second-order fluid over an
//! eps sweep, with the energy-bound monitors recorded along each run.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic::{TrigField, TrigVector};
use crate::error::{DssError, Result};
use crate::etd::Scheme;
use crate::forcing::{ForcingSpec, TrigForcing, VelocityForcing};
use crate::kinetic::{KineticConfig, KineticSolver};
use crate::ordered::{
    boussinesq_ns2d, boussinesq_stokes, second_order_residual, HierarchyConfig, HierarchySolver,
    HierarchyState,
};
use crate::params::{omega, second_order_coeffs, ModelParams, Peclet};
use crate::spectral::{Grid2D, SpectralScalar, SpectralVector};

/// Initial density up to the normalization mean = 1/omega_2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDensity {
    /// (1 + amp sin(2 pi x1) cos(2 pi x2)) / (2 pi).
    Bump { amp: f64 },
    /// (1 + sum_k (re cos + im sin)(2 pi k.x)) / (2 pi), k != 0.
    Fourier { modes: Vec<FourierMode> },
    /// `count` random waves with |k_i| <= kmax and total amplitude at most
    /// `amp`, drawn from the experiment seed.
    Random { count: usize, kmax: i64, amp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: [i64; 2],
    pub re: f64,
    pub im: f64,
}

/// Initial velocity for Navier-Stokes runs (Leray-projected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVelocity {
    /// amp (sin(2 pi x2), sin(2 pi x1)).
    Shear { amp: f64 },
    /// A forcing preset shape used as a velocity.
    Preset { name: String, amp: f64 },
    /// Random divergence-free waves drawn from the experiment seed.
    Random { count: usize, kmax: i64, amp: f64 },
}

impl InitialDensity {
    pub fn to_spectral(&self, grid: &Grid2D, seed: u64) -> Result<SpectralScalar> {
        let c = 1.0 / (2.0 * PI);
        let shape = match self {
            InitialDensity::Bump { amp } => {
                let a = *amp;
                grid.project(|x, y| a * (2.0 * PI * x).sin() * (2.0 * PI * y).cos())
            }
            InitialDensity::Fourier { modes } => {
                if modes.iter().any(|m| m.k == [0, 0]) {
                    return Err(DssError::InvalidParams(
                        "Fourier data must not set the k = 0 mode".into(),
                    ));
                }
                let modes = modes.clone();
                grid.project(move |x, y| {
                    modes
                        .iter()
                        .map(|m| {
                            let a = 2.0 * PI * (m.k[0] as f64 * x + m.k[1] as f64 * y);
                            m.re * a.cos() + m.im * a.sin()
                        })
                        .sum()
                })
            }
            InitialDensity::Random { count, kmax, amp } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = TrigField::random(&mut rng, 2, *count, *kmax, 1.0);
                let total: f64 = f.modes.iter().map(|m| m.amp.abs()).sum();
                let mut g = f
                    .to_spectral(grid)
                    .scale(if total > 0.0 { amp / total } else { 0.0 });
                g.data[0] = Complex64::new(0.0, 0.0);
                g
            }
        };
        let mut rho = grid.dealias(&shape).scale(c);
        rho.data[0] = Complex64::new(c, 0.0);
        let min = grid
            .inverse(&rho)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(DssError::Negativity { min });
        }
        Ok(rho)
    }
}

impl InitialVelocity {
    pub fn to_spectral(&self, grid: &Grid2D, seed: u64) -> Result<SpectralVector> {
        let u = match self {
            InitialVelocity::Shear { amp } => {
                let a = *amp;
                SpectralVector {
                    c: [
                        grid.project(|_, y| a * (2.0 * PI * y).sin()),
                        grid.project(|x, _| a * (2.0 * PI * x).sin()),
                    ],
                }
            }
            InitialVelocity::Preset { name, amp } => {
                TrigForcing::preset(name, *amp, 0.0, 0.0)?.h(grid, 0.0)
            }
            InitialVelocity::Random { count, kmax, amp } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
                TrigVector::random_divergence_free(&mut rng, 2, *count, *kmax, *amp)
                    .to_spectral(grid)
            }
        };
        Ok(grid.dealias_vector(&grid.leray_project(&u)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    pub params: ModelParams,
    pub n: usize,
    pub m_max: usize,
    pub t_end: f64,
    pub dt: f64,
    pub interval: f64,
    pub scheme: Scheme,
    pub forcing: ForcingSpec,
    pub rho_init: InitialDensity,
    pub u_init: InitialVelocity,
    pub eps: Vec<f64>,
    /// Order of the kinetic initial data: 2 is well-prepared, 0 is rho only.
    pub well_prepared_order: usize,
    /// Seed of random initial data; set from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
    /// Data must satisfy lambda |theta| (1 + Pe) ||rho_init||_inf <= 1 / c0.
    pub smallness_c0: f64,
    /// Slope threshold of the pass/fail verdict.
    pub threshold: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig::standard(0.0)
    }
}

impl LimitConfig {
    /// The standard desk-scale configuration; `re = 0` selects Stokes.
    pub fn standard(re: f64) -> Self {
        LimitConfig {
            params: ModelParams {
                re,
                pe: Peclet::Finite(1.0),
                eps: 0.1,
                lambda: 0.5,
                theta: 0.4,
                u0_swim: 0.5,
                dim: 2,
            },
            n: 32,
            m_max: 32,
            t_end: 0.5,
            dt: 3.125e-4,
            interval: 0.025,
            scheme: Scheme::Etd2,
            forcing: ForcingSpec::preset("mixed", 1.0, 0.5, 2.0 * PI),
            rho_init: InitialDensity::Bump { amp: 0.3 },
            u_init: InitialVelocity::Shear { amp: 0.3 },
            eps: vec![0.2, 0.1, 0.05, 0.025],
            well_prepared_order: 2,
            seed: 0,
            smallness_c0: 10.0,
            threshold: 1.8,
        }
    }

    /// lambda |theta| (1 + Pe) ||rho_init||_inf on the grid.
    pub fn smallness(&self) -> Result<f64> {
        let grid = Grid2D::new(self.n)?;
        let rho = grid.inverse(&self.initial_density(&grid)?);
        let sup = rho.iter().cloned().fold(0.0, f64::max);
        let pe = self.params.pe.value();
        Ok(self.params.lambda * self.params.theta.abs() * (1.0 + pe) * sup)
    }

    pub fn initial_density(&self, grid: &Grid2D) -> Result<SpectralScalar> {
        self.rho_init.to_spectral(grid, self.seed)
    }

    pub fn initial_velocity(&self, grid: &Grid2D) -> Result<SpectralVector> {
        self.u_init.to_spectral(grid, self.seed)
    }
}

/// Errors of one kinetic run against the hierarchical solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitRun {
    pub eps: f64,
    /// ||grad(u - u_bar)|| in L2 over time and space.
    pub grad_u_err: f64,
    /// ||u - u_bar|| in L-infinity over time, L2 over space.
    pub u_err: f64,
    /// ||rho_f - rho_bar|| in L-infinity over time, L2 over space.
    pub rho_err: f64,
    /// ||grad(rho_f - rho_bar)|| in L2 over time and space.
    pub grad_rho_err: f64,
    pub steps: usize,
    pub dt_halvings: usize,
    pub max_mass_defect: f64,
    pub max_energy_residual: f64,
    pub min_f: f64,
    /// sup_t ||h||_{H^-1} / ||rho_f|| + lambda |theta| omega sqrt((d-1)/d) / eps.
    pub bound_constant: f64,
    /// max_t ||grad u|| / ||rho_f||.
    pub max_grad_u_over_rho: f64,
    /// max_t ||grad u|| / (||h||_{H^-1} + ||sigma1|| / eps).
    pub max_bound_ratio: f64,
    pub max_picard_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSweep {
    pub config: LimitConfig,
    pub runs: Vec<LimitRun>,
    pub fit_grad_u: LogLogFit,
    pub fit_u: LogLogFit,
    /// Fit of rho_err + grad_rho_err.
    pub fit_rho: LogLogFit,
}

/// Least-squares line log y = intercept + slope log x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half width of the 95% confidence interval of the slope; infinite
    /// with fewer than three points.
    pub slope_ci95: f64,
}

impl LogLogFit {
    pub fn passes(&self, threshold: f64) -> bool {
        self.slope >= threshold
    }
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> LogLogFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_ci95 = if lx.len() > 2 {
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 2.0)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(f64::INFINITY);
        t * se
    } else {
        f64::INFINITY
    };
    LogLogFit {
        slope,
        intercept,
        slope_ci95,
    }
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    loglog_fit(x, y).slope
}

/// Hierarchy snapshots at the hook times.
pub fn hierarchy_trajectory(
    cfg: &LimitConfig,
    forcing: &dyn VelocityForcing,
) -> Result<Vec<HierarchyState>> {
    let grid = Grid2D::new(cfg.n)?;
    let hcfg = HierarchyConfig {
        n: cfg.n,
        dt: cfg.dt,
        scheme: cfg.scheme,
        ..Default::default()
    };
    let solver = HierarchySolver::new(hcfg, forcing)?;
    let u = cfg.initial_velocity(&grid)?;
    let mut s = solver.initial_state(
        cfg.params,
        grid.clone(),
        &cfg.initial_density(&grid)?,
        Some(&u),
    )?;
    let mut snaps = Vec::new();
    solver.run(&mut s, cfg.t_end, cfg.interval, |st| {
        snaps.push(st.clone());
        Ok(())
    })?;
    Ok(snaps)
}

fn time_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

/// One kinetic run at `eps` compared with the hierarchy snapshots.
pub fn limit_run(cfg: &LimitConfig, hier: &[HierarchyState], eps: f64) -> Result<LimitRun> {
    let forcing = &cfg.forcing.build()?;
    let h0 = &hier[0];
    let grid = h0.grid.clone();
    let hsolver = HierarchySolver::new(
        HierarchyConfig {
            n: cfg.n,
            dt: cfg.dt,
            ..Default::default()
        },
        forcing,
    )?;
    let mut state = hsolver.well_prepared_f0(h0, eps, cfg.well_prepared_order, cfg.m_max)?;
    let kcfg = KineticConfig {
        n: cfg.n,
        m_max: cfg.m_max,
        dt: cfg.dt,
        scheme: cfg.scheme,
        ..Default::default()
    };
    let solver = KineticSolver::new(kcfg, forcing, None)?;
    let mut grad_err = Vec::new();
    let mut grad_rho = Vec::new();
    let mut u_err = 0.0_f64;
    let mut rho_err = 0.0_f64;
    let mut times = Vec::new();
    let mut sup_h_over_rho = 0.0_f64;
    let mut max_ratio = 0.0_f64;
    let mut max_bound_ratio = 0.0_f64;
    let mut min_f = f64::INFINITY;
    let mut idx = 0usize;
    let summary = solver.run(&mut state, cfg.t_end, cfg.interval, |s, d| {
        let hs = hier.get(idx).ok_or_else(|| {
            DssError::InvalidParams("kinetic hook times outrun the hierarchy".into())
        })?;
        if (hs.t - s.t).abs() > 1e-9 {
            return Err(DssError::InvalidParams(format!(
                "hook time mismatch {} vs {}",
                hs.t, s.t
            )));
        }
        idx += 1;
        let (ub, rb) = hs.hierarchical_solution(eps);
        let du = s.u.sub(&ub);
        grad_err.push(grid.h1_seminorm_vector(&du).powi(2));
        u_err = u_err.max(grid.l2_norm_vector(&du));
        let dr = s.density().sub(&rb);
        rho_err = rho_err.max(grid.l2_norm(&dr));
        grad_rho.push(grid.h1_seminorm(&dr).powi(2));
        times.push(s.t);
        let h = grid.hm1_norm_vector(&forcing.h(&grid, s.t));
        sup_h_over_rho = sup_h_over_rho.max(h / d.rho_l2);
        max_ratio = max_ratio.max(d.grad_u_over_rho);
        max_bound_ratio = max_bound_ratio.max(d.grad_u_l2 / d.stokes_bound);
        min_f = min_f.min(d.min_f);
        Ok(())
    })?;
    let w = time_weights(&times);
    let l2t = |v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().sqrt();
    let grad_u_err = l2t(&grad_err);
    let grad_rho_err = l2t(&grad_rho);
    let p = &cfg.params;
    let dim = p.dim as f64;
    let bound_constant =
        sup_h_over_rho + p.lambda * p.theta.abs() * omega(p.dim) * ((dim - 1.0) / dim).sqrt() / eps;
    Ok(LimitRun {
        eps,
        grad_u_err,
        u_err,
        rho_err,
        grad_rho_err,
        steps: summary.steps,
        dt_halvings: summary.dt_halvings,
        max_mass_defect: summary.max_mass_defect,
        max_energy_residual: summary.max_energy_residual,
        min_f,
        bound_constant,
        max_grad_u_over_rho: max_ratio,
        max_bound_ratio,
        max_picard_iterations: summary.max_picard_iterations,
    })
}

/// Runs the eps sweep in parallel and fits the log-log slopes.
pub fn limit_sweep(cfg: &LimitConfig) -> Result<LimitSweep> {
    cfg.params.validate_coupled()?;
    if cfg.eps.len() < 2 {
        return Err(DssError::InvalidParams(
            "an eps sweep needs at least two values".into(),
        ));
    }
    if cfg.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DssError::InvalidParams(
            "eps list must be strictly decreasing".into(),
        ));
    }
    let small = cfg.smallness()?;
    if small > 1.0 / cfg.smallness_c0 {
        return Err(DssError::Precondition(format!(
            "smallness lambda |theta| (1 + Pe) ||rho||_inf = {small:.4} exceeds 1/{}",
            cfg.smallness_c0
        )));
    }
    let hier = hierarchy_trajectory(cfg, &cfg.forcing.build()?)?;
    let runs: Vec<LimitRun> = cfg
        .eps
        .par_iter()
        .map(|&e| {
            limit_run(cfg, &hier, e).map_err(|err| DssError::AtEpsilon {
                eps: e,
                source: Box::new(err),
            })
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let fit =
        |f: &dyn Fn(&LimitRun) -> f64| loglog_fit(&eps, &runs.iter().map(f).collect::<Vec<_>>());
    Ok(LimitSweep {
        fit_grad_u: fit(&|r| r.grad_u_err),
        fit_u: fit(&|r| r.u_err),
        fit_rho: fit(&|r| r.rho_err + r.grad_rho_err),
        config: cfg.clone(),
        runs,
    })
}

/// Boussinesq Stokes solution against the homogeneous hierarchy at one eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoussinesqRun {
    pub eps: f64,
    /// max over the sample times of ||u_bous - u_hier||_{H^1}.
    pub h1_diff: f64,
    /// max over the sample times of the outer iteration count.
    pub iterations: usize,
    /// max over the sample times of the H^-1 residual of the homogeneous
    /// second-order fluid, for the Boussinesq and hierarchical solutions
    /// (Stokes mode only).
    pub residual_bous: Option<f64>,
    pub residual_hier: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoussinesqSweep {
    pub runs: Vec<BoussinesqRun>,
    pub fit_h1: LogLogFit,
    pub fit_residual_bous: Option<LogLogFit>,
    pub fit_residual_hier: Option<LogLogFit>,
}

fn boussinesq_fits(runs: Vec<BoussinesqRun>) -> BoussinesqSweep {
    let e: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let fit = |f: &dyn Fn(&BoussinesqRun) -> Option<f64>| -> Option<LogLogFit> {
        let y: Option<Vec<f64>> = runs.iter().map(f).collect();
        y.map(|y| loglog_fit(&e, &y))
    };
    BoussinesqSweep {
        fit_h1: loglog_fit(&e, &runs.iter().map(|r| r.h1_diff).collect::<Vec<_>>()),
        fit_residual_bous: fit(&|r| r.residual_bous),
        fit_residual_hier: fit(&|r| r.residual_hier),
        runs,
    }
}

/// Compares the Boussinesq Stokes solution with u0 + eps u1 for the uniform
/// density 1/omega_d at the given times.
pub fn boussinesq_sweep(
    params: &ModelParams,
    n: usize,
    forcing: &dyn VelocityForcing,
    eps: &[f64],
    times: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<BoussinesqSweep> {
    let grid = Grid2D::new(n)?;
    let params = ModelParams { re: 0.0, ..*params };
    let hsolver = HierarchySolver::new(
        HierarchyConfig {
            n,
            ..Default::default()
        },
        forcing,
    )?;
    let rho = grid.project(|_, _| 1.0 / omega(params.dim));
    let pe_inv = params.pe.inverse();
    let delta = 1e-3;
    let hier_at = |t: f64| -> Result<HierarchyState> {
        let mut s = hsolver.initial_state(params, grid.clone(), &rho, None)?;
        s.t = t;
        hsolver.complete(&mut s)?;
        Ok(s)
    };
    let one = |e: f64| -> Result<BoussinesqRun> {
        let mut run = BoussinesqRun {
            eps: e,
            h1_diff: 0.0,
            iterations: 0,
            residual_bous: Some(0.0),
            residual_hier: Some(0.0),
        };
        for &t in times {
            let coeffs = second_order_coeffs(&params);
            let bous = |tt: f64| {
                boussinesq_stokes(
                    &grid,
                    &coeffs,
                    pe_inv,
                    e,
                    &forcing.h(&grid, tt),
                    &forcing.dt_h(&grid, tt),
                    tol,
                    max_iter,
                )
            };
            let b = bous(t)?;
            let hs: Vec<SpectralVector> = [t - delta, t, t + delta]
                .iter()
                .map(|&tt| hier_at(tt).map(|s| s.hierarchical_solution(e).0))
                .collect::<Result<_>>()?;
            run.h1_diff = run.h1_diff.max(grid.h1_norm_vector(&b.u.sub(&hs[1])));
            run.iterations = run.iterations.max(b.iterations);
            let bs = [bous(t - delta)?.u, b.u.clone(), bous(t + delta)?.u];
            let h = forcing.h(&grid, t);
            let p = params.with_eps(e);
            let res = |u: &[SpectralVector]| {
                second_order_residual(
                    &grid,
                    &p,
                    e,
                    [(&rho, &u[0]), (&rho, &u[1]), (&rho, &u[2])],
                    delta,
                    &h,
                )
                .0
            };
            run.residual_bous = run.residual_bous.map(|r| r.max(res(&bs)));
            run.residual_hier = run.residual_hier.map(|r| r.max(res(&hs)));
        }
        Ok(run)
    };
    let runs: Vec<BoussinesqRun> = eps
        .par_iter()
        .map(|&e| {
            one(e).map_err(|err| DssError::AtEpsilon {
                eps: e,
                source: Box::new(err),
            })
        })
        .collect::<Result<_>>()?;
    Ok(boussinesq_fits(runs))
}

/// Compares the Navier-Stokes Boussinesq trajectory with u0 + eps u1 for the
/// uniform density 1/omega_d, both started from `u_init`, at every
/// `interval` up to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn boussinesq_ns_sweep(
    params: &ModelParams,
    n: usize,
    forcing: &dyn VelocityForcing,
    u_init: &SpectralVector,
    eps: &[f64],
    t_end: f64,
    dt: f64,
    interval: f64,
) -> Result<BoussinesqSweep> {
    if !params.is_navier_stokes() {
        return Err(DssError::InvalidParams(
            "the Navier-Stokes comparison needs re > 0".into(),
        ));
    }
    let grid = Grid2D::new(n)?;
    let hsolver = HierarchySolver::new(
        HierarchyConfig {
            n,
            dt,
            ..Default::default()
        },
        forcing,
    )?;
    let rho = grid.project(|_, _| 1.0 / omega(params.dim));
    let mut s = hsolver.initial_state(*params, grid.clone(), &rho, Some(u_init))?;
    let mut hier = Vec::new();
    hsolver.run(&mut s, t_end, interval, |st| {
        hier.push(st.clone());
        Ok(())
    })?;
    let coeffs = second_order_coeffs(params);
    let pe_inv = params.pe.inverse();
    let runs: Vec<BoussinesqRun> = eps
        .par_iter()
        .map(|&e| {
            let traj = boussinesq_ns2d(
                &grid, &coeffs, pe_inv, e, u_init, forcing, t_end, dt, interval,
            )
            .map_err(|err| DssError::AtEpsilon {
                eps: e,
                source: Box::new(err),
            })?;
            if traj.snapshots.len() != hier.len() {
                return Err(DssError::InvalidParams(
                    "Boussinesq and hierarchy snapshot times differ".into(),
                ));
            }
            let h1_diff = traj
                .snapshots
                .iter()
                .zip(&hier)
                .map(|(b, h)| grid.h1_norm_vector(&b.sub(&h.hierarchical_solution(e).0)))
                .fold(0.0, f64::max);
            Ok(BoussinesqRun {
                eps: e,
                h1_diff,
                iterations: 0,
                residual_bous: None,
                residual_hier: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(boussinesq_fits(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
        let f = loglog_fit(&x, &y);
        assert!((f.intercept - 3.0_f64.ln()).abs() < 1e-12);
        assert!(f.slope_ci95 < 1e-10);
    }

    #[test]
    fn confidence_interval_matches_t_table() {
        // t_{0.975, 2} = 4.302653
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x
            .iter()
            .zip([1.0, -1.0, -1.0, 1.0])
            .map(|(v, s): (&f64, f64)| v.powi(2) * (0.1 * s).exp())
            .collect();
        let f = loglog_fit(&x, &y);
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let m = lx.iter().sum::<f64>() / 4.0;
        let sxx: f64 = lx.iter().map(|a| (a - m).powi(2)).sum();
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b.ln() - f.intercept - f.slope * a.ln()).powi(2))
            .sum();
        let expected = 4.302653 * (rss / 2.0 / sxx).sqrt();
        assert!((f.slope_ci95 - expected).abs() < 1e-5 * expected);
    }

    #[test]
    fn standard_data_is_small_and_normalized() {
        let c = LimitConfig::standard(0.0);
        assert!(c.smallness().unwrap() <= 0.1);
        let grid = Grid2D::new(16).unwrap();
        for init in [
            InitialDensity::Bump { amp: 0.3 },
            InitialDensity::Fourier {
                modes: vec![FourierMode {
                    k: [1, 2],
                    re: 0.2,
                    im: -0.1,
                }],
            },
            InitialDensity::Random {
                count: 4,
                kmax: 2,
                amp: 0.5,
            },
        ] {
            let rho = init.to_spectral(&grid, 7).unwrap();
            assert!((rho.data[0].re * 2.0 * PI - 1.0).abs() < 1e-14);
        }
        assert!(InitialDensity::Bump { amp: 1.5 }
            .to_spectral(&grid, 0)
            .is_err());
        let a = InitialDensity::Random {
            count: 4,
            kmax: 2,
            amp: 0.5,
        };
        assert_eq!(
            a.to_spectral(&grid, 3).unwrap().data,
            a.to_spectral(&grid, 3).unwrap().data
        );
    }
}
