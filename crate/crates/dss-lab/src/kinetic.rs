//! Coupled kinetic solver on the 2D torus times the circle.
//!
//! The density is stored as f(x, phi) = sum_{|m| <= M} f_m(x) e^{i m phi}
//! with f_{-m} = conj(f_m); only m = 0..=M is kept, each mode as the spatial
//! spectrum of f_m. With this layout the angular average is f_0 and the total
//! mass is 2 pi times the mean of f_0.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix3;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::angular::{AngularBasis, AngularFunction};
use crate::error::{DssError, Result};
use crate::etd::{EtdWeights, Scheme};
use crate::forcing::VelocityForcing;
use crate::params::ModelParams;
use crate::spectral::{Grid2D, NodalTensor, SpectralScalar, SpectralVector};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KineticConfig {
    /// Spatial grid size N.
    pub n: usize,
    /// Angular truncation M.
    pub m_max: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Bound on dt times the explicit transport and rotation rates.
    pub cfl: f64,
    pub dt_floor: f64,
}

impl Default for KineticConfig {
    fn default() -> Self {
        KineticConfig {
            n: 32,
            m_max: 32,
            dt: 2.5e-3,
            scheme: Scheme::Etd2,
            picard_tol: 1e-12,
            picard_max_iter: 200,
            cfl: 0.5,
            dt_floor: 1e-7,
        }
    }
}

impl KineticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DssError::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.m_max < 4 {
            return Err(DssError::InvalidParams(format!(
                "m_max must be >= 4, got {}",
                self.m_max
            )));
        }
        if !(self.picard_tol > 0.0) || self.picard_max_iter == 0 {
            return Err(DssError::InvalidParams(
                "Picard tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.cfl > 0.0) {
            return Err(DssError::InvalidParams("cfl must be positive".into()));
        }
        Ok(())
    }
}

/// Additional source in the density equation, as modes m = 0..=M.
pub trait KineticSource: Sync {
    fn source(&self, grid: &Grid2D, m_max: usize, t: f64) -> Vec<Vec<Complex64>>;
}

#[derive(Debug, Clone)]
pub struct KineticState {
    pub params: ModelParams,
    pub grid: Grid2D,
    pub m_max: usize,
    /// Spatial spectra of f_m, m = 0..=M.
    pub f: Vec<Vec<Complex64>>,
    pub u: SpectralVector,
    pub t: f64,
}

impl KineticState {
    /// Uniform isotropic density 1 / (2 pi) at rest.
    pub fn isotropic(params: ModelParams, grid: Grid2D, m_max: usize) -> Result<Self> {
        let mut f = vec![vec![ZERO; grid.len()]; m_max + 1];
        f[0][0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        Self::from_modes(params, grid, m_max, f)
    }

    /// Isotropic density with the given spatial profile.
    pub fn from_density(
        params: ModelParams,
        grid: Grid2D,
        m_max: usize,
        rho: &SpectralScalar,
    ) -> Result<Self> {
        let mut f = vec![vec![ZERO; grid.len()]; m_max + 1];
        f[0] = rho.data.clone();
        Self::from_modes(params, grid, m_max, f)
    }

    /// Density given nodally as functions in the real circle basis.
    pub fn from_circle_field(
        params: ModelParams,
        grid: Grid2D,
        m_max: usize,
        basis: &AngularBasis,
        values: &[AngularFunction],
    ) -> Result<Self> {
        if basis.dim() != 2 || values.len() != grid.len() {
            return Err(DssError::InvalidParams(
                "circle field must have one angular function per node".into(),
            ));
        }
        let a0 = 1.0 / (2.0 * PI).sqrt();
        let am = 0.5 / PI.sqrt();
        let mut nodal = vec![vec![ZERO; grid.len()]; m_max + 1];
        for (p, g) in values.iter().enumerate() {
            nodal[0][p] = Complex64::new(g.coeffs[0] * a0, 0.0);
            for m in 1..=m_max.min(basis.degree()) {
                nodal[m][p] = Complex64::new(g.coeffs[2 * m - 1], -g.coeffs[2 * m]) * am;
            }
        }
        let f = nodal.iter().map(|v| grid.forward_complex(v)).collect();
        Self::from_modes(params, grid, m_max, f)
    }

    pub fn from_modes(
        params: ModelParams,
        grid: Grid2D,
        m_max: usize,
        mut f: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        params.validate_coupled()?;
        if f.len() != m_max + 1 || f.iter().any(|b| b.len() != grid.len()) {
            return Err(DssError::InvalidParams(
                "mode array does not match grid and truncation".into(),
            ));
        }
        for block in &mut f {
            grid.dealias_in_place(block);
        }
        f[0][0].im = 0.0;
        let s = KineticState {
            params,
            u: SpectralVector::zeros(grid.len()),
            grid,
            m_max,
            f,
            t: 0.0,
        };
        let defect = s.mass_defect();
        if defect.abs() > 1e-10 {
            return Err(DssError::InvalidParams(format!(
                "initial density has mass defect {defect:.3e}"
            )));
        }
        Ok(s)
    }

    /// Total mass minus one.
    pub fn mass_defect(&self) -> f64 {
        2.0 * PI * self.f[0][0].re - 1.0
    }

    /// Angular average rho_f = f_0.
    pub fn density(&self) -> SpectralScalar {
        let mut data = self.f[0].clone();
        real_part_spectrum(&self.grid, &mut data);
        SpectralScalar { data }
    }

    /// Nodal f_m for m = 0..=M.
    pub fn nodal_modes(&self) -> Vec<Vec<Complex64>> {
        nodal_modes(&self.grid, &self.f)
    }

    /// f(x, phi) at every grid node and k equispaced angles.
    pub fn nodal_values(&self, k: usize) -> Vec<Vec<f64>> {
        synthesize_angles(&self.nodal_modes(), k)
    }

    fn flatten(&self) -> Vec<Complex64> {
        let mut y: Vec<Complex64> = self.f.concat();
        if self.params.is_navier_stokes() {
            y.extend_from_slice(&self.u.c[0].data);
            y.extend_from_slice(&self.u.c[1].data);
        }
        y
    }

    fn unflatten(&mut self, y: &[Complex64]) {
        let len = self.grid.len();
        for m in 0..=self.m_max {
            self.f[m].copy_from_slice(&y[m * len..(m + 1) * len]);
        }
        self.f[0][0].im = 0.0;
        if self.params.is_navier_stokes() {
            let b = (self.m_max + 1) * len;
            self.u.c[0].data.copy_from_slice(&y[b..b + len]);
            self.u.c[1].data.copy_from_slice(&y[b + len..b + 2 * len]);
        }
    }
}

/// Keeps the Hermitian part so that the inverse transform is real.
fn real_part_spectrum(grid: &Grid2D, data: &mut [Complex64]) {
    let r = reflect(grid, data);
    for (v, w) in data.iter_mut().zip(r) {
        *v = 0.5 * (*v + w.conj());
    }
}

/// Spectrum of conj(g) from the spectrum of g: conj(g_hat(-k)).
fn conj_spectrum(grid: &Grid2D, s: &[Complex64]) -> Vec<Complex64> {
    reflect(grid, s).into_iter().map(|v| v.conj()).collect()
}

fn reflect(grid: &Grid2D, s: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = vec![ZERO; s.len()];
    for j in 0..n {
        for l in 0..n {
            out[((n - j) % n) * n + (n - l) % n] = s[j * n + l];
        }
    }
    out
}

pub fn nodal_modes(grid: &Grid2D, f: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    f.par_iter().map(|b| grid.inverse_complex(b)).collect()
}

/// Nodal mode m (any sign) with the conjugate convention and truncation.
fn mode(nodal: &[Vec<Complex64>], m: i64, p: usize) -> Complex64 {
    let a = m.unsigned_abs() as usize;
    if a >= nodal.len() {
        ZERO
    } else if m < 0 {
        nodal[a][p].conj()
    } else {
        nodal[a][p]
    }
}

/// Real values f(x_p, 2 pi q / k) from nodal modes.
pub fn synthesize_angles(nodal: &[Vec<Complex64>], k: usize) -> Vec<Vec<f64>> {
    let m_max = nodal.len() - 1;
    assert!(k > 2 * m_max, "angular sampling too coarse");
    let plan = FftPlanner::new().plan_fft_inverse(k);
    let len = nodal[0].len();
    (0..len)
        .into_par_iter()
        .map(|p| {
            let mut buf = vec![ZERO; k];
            buf[0] = Complex64::new(nodal[0][p].re, 0.0);
            for m in 1..=m_max {
                buf[m] = nodal[m][p];
                buf[k - m] = nodal[m][p].conj();
            }
            plan.process(&mut buf);
            buf.into_iter().map(|v| v.re).collect()
        })
        .collect()
}

/// Spectra of the angular modes m = 0..=M of f(x, y, phi), sampled on the
/// grid and on k equispaced angles, dealiased.
pub fn project_modes<F>(grid: &Grid2D, m_max: usize, k: usize, f: F) -> Vec<Vec<Complex64>>
where
    F: Fn(f64, f64, &[f64]) -> Vec<f64> + Sync,
{
    let plan: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(k);
    let angles: Vec<f64> = (0..k).map(|q| 2.0 * PI * q as f64 / k as f64).collect();
    let per_point: Vec<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let (x, y) = grid.point(p);
            let mut buf: Vec<Complex64> = f(x, y, &angles)
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect();
            plan.process(&mut buf);
            buf.truncate(m_max + 1);
            buf.into_iter().map(|v| v / k as f64).collect()
        })
        .collect();
    (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let nodal: Vec<Complex64> = per_point.iter().map(|c| c[m]).collect();
            let mut s = grid.forward_complex(&nodal);
            grid.dealias_in_place(&mut s);
            s
        })
        .collect()
}

/// Elastic stress lambda theta int (nn - Id/2) f dphi, nodal.
pub fn sigma1_nodal(params: &ModelParams, nodal: &[Vec<Complex64>]) -> NodalTensor {
    let len = nodal[0].len();
    let c = params.lambda * params.theta * PI;
    let mut s = NodalTensor::zeros(len);
    for p in 0..len {
        let f2 = mode(nodal, 2, p);
        s.c[0][0][p] = c * f2.re;
        s.c[1][1][p] = -c * f2.re;
        s.c[0][1][p] = -c * f2.im;
        s.c[1][0][p] = -c * f2.im;
    }
    s
}

/// Viscous stress lambda int (nn)(n.grad u n) f dphi, nodal.
pub fn sigma2_nodal(
    params: &ModelParams,
    nodal: &[Vec<Complex64>],
    grad: &NodalTensor,
) -> NodalTensor {
    let len = nodal[0].len();
    let lam = params.lambda;
    let mut s = NodalTensor::zeros(len);
    for p in 0..len {
        let tp = 2.0 * PI;
        let c0 = tp * mode(nodal, 0, p).re;
        let f2 = mode(nodal, 2, p);
        let f4 = mode(nodal, 4, p);
        let (c2, s2) = (tp * f2.re, -tp * f2.im);
        let (c4, s4) = (tp * f4.re, -tp * f4.im);
        let d11 = grad.c[0][0][p];
        let d22 = grad.c[1][1][p];
        let d12 = 0.5 * (grad.c[0][1][p] + grad.c[1][0][p]);
        let t = 0.5 * (d11 + d22);
        let a = 0.5 * (d11 - d22);
        let b = d12;
        let iso = 0.5 * (t * c0 + a * c2 + b * s2);
        let aniso = 0.5 * (t * c2 + 0.5 * a * (c0 + c4) + 0.5 * b * s4);
        s.c[0][0][p] = lam * (iso + aniso);
        s.c[1][1][p] = lam * (iso - aniso);
        let off = lam * 0.5 * (t * s2 + 0.5 * a * s4 + 0.5 * b * (c0 - c4));
        s.c[0][1][p] = off;
        s.c[1][0][p] = off;
    }
    s
}

/// One evaluation of the explicit right-hand side, plus the velocity it used.
struct Rhs<'a> {
    params: ModelParams,
    grid: &'a Grid2D,
    m_max: usize,
    forcing: &'a dyn VelocityForcing,
    source: Option<&'a dyn KineticSource>,
    cfg: &'a KineticConfig,
    u_cache: SpectralVector,
    picard_iterations: usize,
}

impl Rhs<'_> {
    fn blocks<'y>(&self, y: &'y [Complex64]) -> Vec<&'y [Complex64]> {
        let len = self.grid.len();
        y.chunks(len).collect()
    }

    /// Velocity at (f, t): Picard-coupled Stokes solve or the stored field.
    fn velocity(
        &mut self,
        nodal: &[Vec<Complex64>],
        y: &[Complex64],
        t: f64,
    ) -> Result<SpectralVector> {
        let len = self.grid.len();
        if self.params.is_navier_stokes() {
            let b = (self.m_max + 1) * len;
            return Ok(SpectralVector {
                c: [
                    SpectralScalar {
                        data: y[b..b + len].to_vec(),
                    },
                    SpectralScalar {
                        data: y[b + len..b + 2 * len].to_vec(),
                    },
                ],
            });
        }
        let grid = self.grid;
        let params = self.params;
        let s1 = sigma1_nodal(&params, nodal);
        let rhs = self
            .forcing
            .h(grid, t)
            .add(&grid.tensor_divergence(&s1).scale(1.0 / params.eps));
        let sol = grid.picard_stokes(
            &rhs,
            1.0,
            |g| sigma2_nodal(&params, nodal, g),
            Some(&self.u_cache),
            self.cfg.picard_tol,
            self.cfg.picard_max_iter,
        )?;
        self.picard_iterations = self.picard_iterations.max(sol.iterations);
        self.u_cache = sol.u.clone();
        Ok(sol.u)
    }

    fn eval(&mut self, y: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        let grid = self.grid;
        let len = grid.len();
        let m_max = self.m_max;
        let blocks = self.blocks(y);
        let nodal: Vec<Vec<Complex64>> = blocks[..=m_max]
            .par_iter()
            .map(|b| grid.inverse_complex(b))
            .collect();
        let u = self.velocity(&nodal, y, t)?;
        let un = grid.inverse_vector(&u);
        let grad = grid.velocity_gradient(&u);
        let u0s = self.params.u0_swim;
        let src = self.source.map(|s| s.source(grid, m_max, t));
        let conj_f1 = conj_spectrum(grid, blocks[1]);
        let b0: Vec<f64> = (0..len)
            .map(|p| 0.5 * (grad.c[1][0][p] - grad.c[0][1][p]))
            .collect();
        let b2: Vec<Complex64> = (0..len)
            .map(|p| {
                Complex64::new(
                    grad.c[1][0][p] + grad.c[0][1][p],
                    -(grad.c[1][1][p] - grad.c[0][0][p]),
                ) * 0.25
            })
            .collect();
        let mut out: Vec<Vec<Complex64>> = (0..=m_max)
            .into_par_iter()
            .map(|m| {
                let fm = &nodal[m];
                let fl0: Vec<Complex64> = (0..len).map(|p| fm[p] * un[0][p]).collect();
                let fl1: Vec<Complex64> = (0..len).map(|p| fm[p] * un[1][p]).collect();
                let s0 = grid.forward_complex(&fl0);
                let s1 = grid.forward_complex(&fl1);
                let rot = if m == 0 {
                    vec![ZERO; len]
                } else {
                    let mi = m as i64;
                    let nod: Vec<Complex64> = (0..len)
                        .map(|p| {
                            let v = fm[p] * b0[p]
                                + b2[p] * mode(&nodal, mi - 2, p)
                                + b2[p].conj() * mode(&nodal, mi + 2, p);
                            I * (m as f64) * v
                        })
                        .collect();
                    grid.forward_complex(&nod)
                };
                let fminus: &[Complex64] = if m == 0 { &conj_f1 } else { blocks[m - 1] };
                let fplus: Option<&[Complex64]> =
                    if m < m_max { Some(blocks[m + 1]) } else { None };
                let mut o = vec![ZERO; len];
                for p in 0..len {
                    if !grid.in_mask(p) {
                        continue;
                    }
                    let (k0, k1) = grid.wavevector(p);
                    let adv = I * k0 * s0[p] + I * k1 * s1[p];
                    let mut swim = Complex64::new(k1, k0) * fminus[p] * 0.5;
                    if let Some(fp) = fplus {
                        swim += Complex64::new(-k1, k0) * fp[p] * 0.5;
                    }
                    o[p] = -adv - rot[p] - swim * u0s;
                }
                o
            })
            .collect();
        if let Some(src) = src {
            for (o, s) in out.iter_mut().zip(src) {
                for p in 0..len {
                    if grid.in_mask(p) {
                        o[p] += s[p];
                    }
                }
            }
        }
        let mut flat: Vec<Complex64> = out.concat();
        if self.params.is_navier_stokes() {
            let eps = self.params.eps;
            let re = self.params.re;
            let s1 = sigma1_nodal(&self.params, &nodal);
            let s2 = sigma2_nodal(&self.params, &nodal, &grad);
            let mut stress = NodalTensor::zeros(len);
            for i in 0..2 {
                for j in 0..2 {
                    for p in 0..len {
                        stress.c[i][j][p] =
                            s1.c[i][j][p] / eps + s2.c[i][j][p] - re * un[i][p] * un[j][p];
                    }
                }
            }
            let rhs = self
                .forcing
                .h(grid, t)
                .add(&grid.tensor_divergence(&stress));
            let du = grid.leray_project(&rhs).scale(1.0 / re);
            flat.extend_from_slice(&du.c[0].data);
            flat.extend_from_slice(&du.c[1].data);
        }
        Ok(flat)
    }
}

/// Energy bookkeeping of the density equation at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticDiagnostics {
    pub t: f64,
    pub grad_u_l2: f64,
    pub u_l2: f64,
    pub rho_l2: f64,
    pub grad_rho_l2: f64,
    pub f_l2: f64,
    pub grad_n_f_l2: f64,
    pub mass_defect: f64,
    pub min_f: f64,
    pub max_f: f64,
    /// Half the squared L2 norm of f.
    pub energy: f64,
    /// Right-hand side of the energy identity d/dt energy = rate.
    pub energy_rate: f64,
    /// ||grad u|| / ||rho_f||.
    pub grad_u_over_rho: f64,
    /// ||h||_{H^-1} + ||sigma1||_{L2} / eps, an upper bound for ||grad u|| in
    /// Stokes mode whenever f >= 0.
    pub stokes_bound: f64,
    pub picard_iterations: usize,
}

/// Trajectory summary returned by [`KineticSolver::run`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub final_dt: f64,
    pub dt_halvings: usize,
    pub max_mass_defect: f64,
    /// max over steps of |Delta energy / dt - trapezoid(rate)|.
    pub max_energy_residual: f64,
    pub max_picard_iterations: usize,
    pub records: Vec<KineticDiagnostics>,
}

pub struct KineticSolver<'a> {
    pub cfg: KineticConfig,
    forcing: &'a dyn VelocityForcing,
    source: Option<&'a dyn KineticSource>,
}

impl<'a> KineticSolver<'a> {
    pub fn new(
        cfg: KineticConfig,
        forcing: &'a dyn VelocityForcing,
        source: Option<&'a dyn KineticSource>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(KineticSolver {
            cfg,
            forcing,
            source,
        })
    }

    fn rhs<'s>(&'s self, s: &'s KineticState) -> Rhs<'s> {
        Rhs {
            params: s.params,
            grid: &s.grid,
            m_max: s.m_max,
            forcing: self.forcing,
            source: self.source,
            cfg: &self.cfg,
            u_cache: s.u.clone(),
            picard_iterations: 0,
        }
    }

    fn linear_part(&self, s: &KineticState) -> Vec<f64> {
        let grid = &s.grid;
        let pe_inv = s.params.pe.inverse();
        let mut lin = Vec::with_capacity(s.f.len() * grid.len());
        for m in 0..=s.m_max {
            let am = (m * m) as f64 / s.params.eps;
            lin.extend((0..grid.len()).map(|p| -grid.k2(p) * pe_inv - am));
        }
        if s.params.is_navier_stokes() {
            for _ in 0..2 {
                lin.extend((0..grid.len()).map(|p| -grid.k2(p) / s.params.re));
            }
        }
        lin
    }

    /// Makes the Stokes velocity consistent with f at the current time.
    pub fn initialize(&self, s: &mut KineticState) -> Result<()> {
        if !s.params.is_navier_stokes() {
            let nodal = s.nodal_modes();
            let y = s.flatten();
            let mut rhs = self.rhs(s);
            let u = rhs.velocity(&nodal, &y, s.t)?;
            s.u = u;
        }
        Ok(())
    }

    /// dt times the explicit transport and rotation rates of the undamped modes.
    pub fn cfl_number(&self, s: &KineticState, dt: f64) -> f64 {
        let un = s.grid.inverse_vector(&s.u);
        let umax = (0..s.grid.len())
            .map(|p| (un[0][p].powi(2) + un[1][p].powi(2)).sqrt())
            .fold(0.0, f64::max);
        let grad = s.grid.velocity_gradient(&s.u);
        let gmax = (0..s.grid.len())
            .map(|p| grad.at(p).amax())
            .fold(0.0, f64::max);
        let dx = s.grid.spacing();
        // modes with m^2 dt / eps >> 1 are damped by the exact exponential
        let m_eff = (s.params.eps / dt).sqrt().clamp(1.0, s.m_max as f64);
        dt * ((umax + s.params.u0_swim.abs()) / dx + 2.0 * m_eff * gmax)
    }

    fn advance(&self, s: &mut KineticState, w: &EtdWeights) -> Result<usize> {
        let y = s.flatten();
        let t = s.t;
        let mut rhs = self.rhs(s);
        let y1 = w.step(&y, t, |v, tt| rhs.eval(v, tt))?;
        let iters = rhs.picard_iterations;
        let cache = rhs.u_cache.clone();
        s.unflatten(&y1);
        s.t = t + w.h;
        if !s.params.is_navier_stokes() {
            s.u = cache;
            self.initialize(s)?;
        }
        Ok(iters)
    }

    /// One step of size dt, without CFL adaptation.
    pub fn step(&self, s: &mut KineticState, dt: f64) -> Result<()> {
        let w = EtdWeights::new(self.cfg.scheme, &self.linear_part(s), dt);
        self.advance(s, &w).map(|_| ())
    }

    pub fn diagnostics(&self, s: &KineticState) -> Result<KineticDiagnostics> {
        let grid = &s.grid;
        let len = grid.len();
        let nodal = s.nodal_modes();
        let tp = 2.0 * PI;
        let mut f2 = 0.0;
        let mut gx2 = 0.0;
        let mut gn2 = 0.0;
        for (m, b) in s.f.iter().enumerate() {
            let w = if m == 0 { 1.0 } else { 2.0 };
            for (p, v) in b.iter().enumerate() {
                let a = v.norm_sqr();
                f2 += w * a;
                gx2 += w * a * grid.k2(p);
                gn2 += w * a * (m * m) as f64;
            }
        }
        let (f2, gx2, gn2) = (tp * f2, tp * gx2, tp * gn2);
        let grad = grid.velocity_gradient(&s.u);
        let mut rot = 0.0;
        let m_max = s.m_max as i64;
        for p in 0..len {
            let mut q0 = 0.0;
            let mut q2 = ZERO;
            for m in -m_max..=m_max {
                let fm = mode(&nodal, m, p);
                q0 += fm.norm_sqr();
                q2 += fm * mode(&nodal, 2 - m, p);
            }
            let d11 = grad.c[0][0][p];
            let d22 = grad.c[1][1][p];
            let d12 = 0.5 * (grad.c[0][1][p] + grad.c[1][0][p]);
            rot += tp * (0.5 * (d11 + d22) * q0 + 0.5 * (d11 - d22) * q2.re - d12 * q2.im);
        }
        rot /= len as f64;
        let mut src_term = 0.0;
        if let Some(src) = self.source {
            let sm = src.source(grid, s.m_max, s.t);
            for (m, (b, sb)) in s.f.iter().zip(&sm).enumerate() {
                let w = if m == 0 { 1.0 } else { 2.0 };
                for p in 0..len {
                    if grid.in_mask(p) {
                        src_term += w * (b[p] * sb[p].conj()).re;
                    }
                }
            }
            src_term *= tp;
        }
        let energy_rate = -s.params.pe.inverse() * gx2 - gn2 / s.params.eps + rot + src_term;
        let k = 4 * (s.m_max + 1);
        let vals = synthesize_angles(&nodal, k);
        let (mut min_f, mut max_f) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in &vals {
            for &v in row {
                min_f = min_f.min(v);
                max_f = max_f.max(v);
            }
        }
        let rho = s.density();
        let rho_l2 = grid.l2_norm(&rho);
        let grad_u_l2 = grid.h1_seminorm_vector(&s.u);
        let s1 = sigma1_nodal(&s.params, &nodal);
        let s1_l2 = ((0..len).map(|p| s1.at(p).norm_squared()).sum::<f64>() / len as f64).sqrt();
        let h = self.forcing.h(grid, s.t);
        Ok(KineticDiagnostics {
            t: s.t,
            grad_u_l2,
            u_l2: grid.l2_norm_vector(&s.u),
            rho_l2,
            grad_rho_l2: grid.h1_seminorm(&rho),
            f_l2: f2.sqrt(),
            grad_n_f_l2: gn2.sqrt(),
            mass_defect: s.mass_defect(),
            min_f,
            max_f,
            energy: 0.5 * f2,
            energy_rate,
            grad_u_over_rho: grad_u_l2 / rho_l2,
            stokes_bound: grid.hm1_norm_vector(&h) + s1_l2 / s.params.eps,
            picard_iterations: 0,
        })
    }

    /// Integrates to `t_end`, calling `hook` every `interval` time units
    /// (and at the start). Steps never cross a hook time.
    pub fn run<H>(
        &self,
        s: &mut KineticState,
        t_end: f64,
        interval: f64,
        mut hook: H,
    ) -> Result<RunSummary>
    where
        H: FnMut(&KineticState, &KineticDiagnostics) -> Result<()>,
    {
        if !(t_end >= s.t) {
            return Err(DssError::InvalidParams(format!(
                "final time {t_end} precedes current time {}",
                s.t
            )));
        }
        if !(interval > 0.0) {
            return Err(DssError::InvalidParams(
                "hook interval must be positive".into(),
            ));
        }
        self.initialize(s)?;
        let lin = self.linear_part(s);
        let mut cache: HashMap<u64, EtdWeights> = HashMap::new();
        let mut diag = self.diagnostics(s)?;
        hook(s, &diag)?;
        let mut summary = RunSummary {
            steps: 0,
            final_time: s.t,
            final_dt: self.cfg.dt,
            dt_halvings: 0,
            max_mass_defect: diag.mass_defect.abs(),
            max_energy_residual: 0.0,
            max_picard_iterations: 0,
            records: vec![diag],
        };
        let tiny = 1e-12 * t_end.abs().max(1.0);
        let mut dt_cur = self.cfg.dt;
        let mut next_hook = s.t + interval;
        while s.t < t_end - tiny {
            let target = next_hook.min(t_end);
            let mut dt = dt_cur.min(target - s.t);
            while self.cfl_number(s, dt) > self.cfg.cfl {
                dt_cur *= 0.5;
                summary.dt_halvings += 1;
                if dt_cur < self.cfg.dt_floor {
                    return Err(DssError::StepUnderflow {
                        dt: dt_cur,
                        floor: self.cfg.dt_floor,
                    });
                }
                dt = dt_cur.min(target - s.t);
            }
            // Snap to the hook time when the remainder is a rounding leftover.
            if target - s.t - dt < tiny {
                dt = target - s.t;
            }
            let w = cache
                .entry(dt.to_bits())
                .or_insert_with(|| EtdWeights::new(self.cfg.scheme, &lin, dt));
            let iters = self.advance(s, w)?;
            if (target - s.t).abs() < tiny {
                s.t = target;
            }
            summary.steps += 1;
            summary.max_picard_iterations = summary.max_picard_iterations.max(iters);
            let mut next = self.diagnostics(s)?;
            next.picard_iterations = iters;
            let residual =
                (next.energy - diag.energy) / dt - 0.5 * (next.energy_rate + diag.energy_rate);
            summary.max_energy_residual = summary.max_energy_residual.max(residual.abs());
            summary.max_mass_defect = summary.max_mass_defect.max(next.mass_defect.abs());
            diag = next;
            if s.t >= next_hook - tiny {
                hook(s, &diag)?;
                summary.records.push(diag);
                next_hook += interval;
            }
        }
        summary.final_time = s.t;
        summary.final_dt = dt_cur;
        Ok(summary)
    }
}

/// Manufactured solution for the coupled system,
/// f* = (1 + a(t) w(x) v(phi)) / (2 pi) and u* = cos(t) U(x), with
/// w = sin(2 pi x1) exp(alpha cos(2 pi x2)) and v = exp(beta cos(phi - phi0)).
/// The density source is the exact continuous residual; the body force is
/// assembled with the discrete stresses so that u* solves the discrete fluid
/// equation whenever f = f*.
#[derive(Debug, Clone)]
pub struct KineticManufactured {
    pub params: ModelParams,
    pub m_max: usize,
    pub amp: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phi0: f64,
    pub velocity: crate::analytic::TrigVector,
}

impl KineticManufactured {
    pub fn standard(params: ModelParams, m_max: usize) -> Self {
        use crate::analytic::{TrigField, TrigVector};
        let psi = TrigField::wave(0.06, [1, 0, 0], 0.2).add(&TrigField::wave(0.04, [1, 1, 0], 0.9));
        KineticManufactured {
            params,
            m_max,
            amp: 0.25,
            alpha: 0.5,
            beta: 0.7,
            phi0: 0.4,
            velocity: TrigVector::from_stream(&psi),
        }
    }

    fn a(&self, t: f64) -> f64 {
        self.amp * (t + 0.3).sin()
    }

    fn a_dt(&self, t: f64) -> f64 {
        self.amp * (t + 0.3).cos()
    }

    /// w, d1 w, d2 w, Laplace w.
    fn w(&self, x: f64, y: f64) -> [f64; 4] {
        let k = 2.0 * PI;
        let (s1, c1) = (k * x).sin_cos();
        let (s2, c2) = (k * y).sin_cos();
        let e = (self.alpha * c2).exp();
        let e2 = -self.alpha * k * s2 * e;
        let e22 = e * ((self.alpha * k * s2).powi(2) - self.alpha * k * k * c2);
        [s1 * e, k * c1 * e, s1 * e2, -k * k * s1 * e + s1 * e22]
    }

    /// v, v', v''.
    fn v(&self, phi: f64) -> [f64; 3] {
        let (s, c) = (phi - self.phi0).sin_cos();
        let v = (self.beta * c).exp();
        [
            v,
            -self.beta * s * v,
            (self.beta * self.beta * s * s - self.beta * c) * v,
        ]
    }

    pub fn f_values(&self, t: f64, x: f64, y: f64, angles: &[f64]) -> Vec<f64> {
        let c = 1.0 / (2.0 * PI);
        let aw = self.a(t) * self.w(x, y)[0];
        angles
            .iter()
            .map(|&phi| c * (1.0 + aw * self.v(phi)[0]))
            .collect()
    }

    fn source_values(&self, t: f64, x: f64, y: f64, angles: &[f64]) -> Vec<f64> {
        let c = 1.0 / (2.0 * PI);
        let p = &self.params;
        let pos = nalgebra::Vector3::new(x, y, 0.0);
        let scale = t.cos();
        let u = self.velocity.eval(&pos) * scale;
        let g: Matrix3<f64> = self.velocity.gradient_at(&pos) * scale;
        let [w, w1, w2, lw] = self.w(x, y);
        let (a, ad) = (self.a(t), self.a_dt(t));
        angles
            .iter()
            .map(|&phi| {
                let [v, v1, v2] = self.v(phi);
                let (sp, cp) = phi.sin_cos();
                let (s2, c2) = (2.0 * phi).sin_cos();
                let f = c * (1.0 + a * w * v);
                let f_phi = c * a * w * v1;
                let f_phiphi = c * a * w * v2;
                let dt = c * ad * w * v;
                let transport =
                    c * a * v * ((u[0] + p.u0_swim * cp) * w1 + (u[1] + p.u0_swim * sp) * w2);
                let b =
                    g[(1, 0)] * cp * cp - g[(0, 1)] * sp * sp + (g[(1, 1)] - g[(0, 0)]) * sp * cp;
                let bp = -(g[(1, 0)] + g[(0, 1)]) * s2 + (g[(1, 1)] - g[(0, 0)]) * c2;
                let rot = bp * f + b * f_phi;
                let diff = p.pe.inverse() * c * a * lw * v + f_phiphi / p.eps;
                dt + transport + rot - diff
            })
            .collect()
    }

    pub fn exact_modes(&self, grid: &Grid2D, t: f64) -> Vec<Vec<Complex64>> {
        let k = 4 * (self.m_max + 1).max(8);
        let mut f = project_modes(grid, self.m_max, k, |x, y, ang| self.f_values(t, x, y, ang));
        f[0][0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        f
    }

    pub fn exact_velocity(&self, grid: &Grid2D, t: f64) -> SpectralVector {
        self.velocity.to_spectral(grid).scale(t.cos())
    }

    pub fn initial_state(&self, grid: Grid2D) -> Result<KineticState> {
        let f = self.exact_modes(&grid, 0.0);
        let mut s = KineticState::from_modes(self.params, grid, self.m_max, f)?;
        s.u = self.exact_velocity(&s.grid, 0.0);
        Ok(s)
    }

    /// L2(x, phi) distance of f to f* and H1 distance of u to u*.
    pub fn errors(&self, s: &KineticState) -> (f64, f64) {
        let ex = self.exact_modes(&s.grid, s.t);
        let mut acc = 0.0;
        for (m, (a, b)) in s.f.iter().zip(&ex).enumerate() {
            let w = if m == 0 { 1.0 } else { 2.0 };
            acc += w * a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>();
        }
        let du = s.u.sub(&self.exact_velocity(&s.grid, s.t));
        ((2.0 * PI * acc).sqrt(), s.grid.h1_norm_vector(&du))
    }
}

impl KineticSource for KineticManufactured {
    fn source(&self, grid: &Grid2D, m_max: usize, t: f64) -> Vec<Vec<Complex64>> {
        let k = 4 * (m_max + 1).max(8);
        let mut s = project_modes(grid, m_max, k, |x, y, ang| self.source_values(t, x, y, ang));
        s[0][0] = ZERO;
        s
    }
}

impl VelocityForcing for KineticManufactured {
    fn h(&self, grid: &Grid2D, t: f64) -> SpectralVector {
        let p = &self.params;
        let len = grid.len();
        let f = self.exact_modes(grid, t);
        let nodal = nodal_modes(grid, &f);
        let u = self.exact_velocity(grid, t);
        let grad = grid.velocity_gradient(&u);
        let un = grid.inverse_vector(&u);
        let s1 = sigma1_nodal(p, &nodal);
        let s2 = sigma2_nodal(p, &nodal, &grad);
        let mut stress = NodalTensor::zeros(len);
        for i in 0..2 {
            for j in 0..2 {
                for q in 0..len {
                    stress.c[i][j][q] =
                        s1.c[i][j][q] / p.eps + s2.c[i][j][q] - p.re * un[i][q] * un[j][q];
                }
            }
        }
        let mut h = grid
            .laplacian_vector(&u)
            .scale(-1.0)
            .sub(&grid.tensor_divergence(&stress));
        if p.is_navier_stokes() {
            h = h.add(&self.velocity.to_spectral(grid).scale(-p.re * t.sin()));
        }
        h
    }

    /// Centered difference; the kinetic solver never calls it.
    fn dt_h(&self, grid: &Grid2D, t: f64) -> SpectralVector {
        let d = 1e-5;
        self.h(grid, t + d).sub(&self.h(grid, t - d)).scale(0.5 / d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::sigma2 as sigma2_quadrature;
    use crate::forcing::TrigForcing;
    use crate::params::Peclet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(re: f64, lambda: f64) -> ModelParams {
        ModelParams {
            re,
            pe: Peclet::Finite(1.0),
            eps: 0.2,
            lambda,
            theta: 2.0,
            u0_swim: 0.5,
            dim: 2,
        }
    }

    #[test]
    fn stresses_match_angular_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params(0.0, 0.7);
        let basis = AngularBasis::circle(6);
        let modes: Vec<Complex64> = (0..=6)
            .map(|m| {
                if m == 0 {
                    Complex64::new(0.3, 0.0)
                } else {
                    Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))
                }
            })
            .collect();
        let nodal: Vec<Vec<Complex64>> = modes.iter().map(|&c| vec![c]).collect();
        let g = basis.project(|n| {
            let phi = n[1].atan2(n[0]);
            modes[0].re
                + 2.0
                    * (1..=6)
                        .map(|m| (modes[m] * Complex64::from_polar(1.0, m as f64 * phi)).re)
                        .sum::<f64>()
        });
        let mut grad = NodalTensor::zeros(1);
        let gm = Matrix3::new(0.3, -0.8, 0.0, 0.5, -0.3, 0.0, 0.0, 0.0, 0.0);
        grad.set(0, &gm);
        let s2 = sigma2_nodal(&p, &nodal, &grad).at(0);
        let s2q = sigma2_quadrature(&basis, &p, &g, &gm);
        assert!((s2 - s2q).amax() < 1e-13, "{s2} vs {s2q}");
        let s1 = sigma1_nodal(&p, &nodal).at(0);
        let s1q = crate::closure::sigma1(&basis, &p, &g);
        assert!((s1 - s1q).amax() < 1e-13);
    }

    #[test]
    fn isotropic_equilibrium_is_fixed() {
        for re in [0.0, 1.0] {
            let p = ModelParams {
                u0_swim: 0.0,
                ..params(re, 0.5)
            };
            let grid = Grid2D::new(16).unwrap();
            let mut s = KineticState::isotropic(p, grid, 6).unwrap();
            let s0 = s.clone();
            let forcing = TrigForcing::zero();
            let cfg = KineticConfig {
                n: 16,
                m_max: 6,
                dt: 0.05,
                ..Default::default()
            };
            let solver = KineticSolver::new(cfg, &forcing, None).unwrap();
            let sum = solver.run(&mut s, 0.5, 0.25, |_, _| Ok(())).unwrap();
            for (a, b) in s.f.iter().zip(&s0.f) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).norm() < 1e-16);
                }
            }
            assert!(s.grid.l2_norm_vector(&s.u) < 1e-16);
            let d = sum.records.last().unwrap();
            assert_eq!(d.grad_u_l2, 0.0);
            assert_eq!(d.grad_rho_l2, 0.0);
            assert!(sum.max_mass_defect < 1e-15);
        }
    }

    #[test]
    fn angular_diffusion_step_does_not_increase_norm() {
        let p = ModelParams {
            u0_swim: 0.0,
            lambda: 0.0,
            ..params(0.0, 0.0)
        };
        let grid = Grid2D::new(8).unwrap();
        let mut f = vec![vec![ZERO; grid.len()]; 5];
        f[0][0] = Complex64::new(1.0 / (2.0 * PI), 0.0);
        f[2][0] = Complex64::new(0.03, -0.02);
        f[3][0] = Complex64::new(0.01, 0.0);
        let mut s = KineticState::from_modes(p, grid, 4, f).unwrap();
        let forcing = TrigForcing::zero();
        let cfg = KineticConfig {
            n: 8,
            m_max: 4,
            scheme: Scheme::Etd1,
            ..Default::default()
        };
        let solver = KineticSolver::new(cfg, &forcing, None).unwrap();
        let before = solver.diagnostics(&s).unwrap().f_l2;
        solver.step(&mut s, 0.1).unwrap();
        let after = solver.diagnostics(&s).unwrap().f_l2;
        assert!(after <= before);
        assert!(
            (s.f[2][0] - Complex64::new(0.03, -0.02) * (-4.0 * 0.1 / 0.2_f64).exp()).norm() < 1e-16
        );
    }

    #[test]
    fn zero_coupling_gives_plain_stokes_and_passive_transport() {
        let p = params(0.0, 0.0);
        let grid = Grid2D::new(16).unwrap();
        let forcing = TrigForcing::preset("cellular", 2.0, 0.0, 0.0).unwrap();
        let rho = grid
            .project(|x, y| (1.0 + 0.3 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()) / (2.0 * PI));
        let mut s = KineticState::from_density(p, grid.clone(), 6, &rho).unwrap();
        let cfg = KineticConfig {
            n: 16,
            m_max: 6,
            dt: 0.01,
            ..Default::default()
        };
        let solver = KineticSolver::new(cfg, &forcing, None).unwrap();
        let sum = solver.run(&mut s, 0.2, 0.1, |_, _| Ok(())).unwrap();
        let plain = grid.stokes_solve(&forcing.h(&grid, 0.2));
        assert!(grid.h1_norm_vector(&s.u.sub(&plain)) < 1e-12);
        assert!(sum.max_mass_defect < 1e-12);
        // independent of the density
        let mut s2 = KineticState::isotropic(p, grid, 6).unwrap();
        solver.run(&mut s2, 0.2, 0.1, |_, _| Ok(())).unwrap();
        assert_eq!(s.u, s2.u);
    }

    #[test]
    fn negative_final_time_is_rejected_and_zero_horizon_is_identity() {
        let p = params(0.0, 0.3);
        let grid = Grid2D::new(8).unwrap();
        let forcing = TrigForcing::zero();
        let solver = KineticSolver::new(
            KineticConfig {
                n: 8,
                m_max: 4,
                ..Default::default()
            },
            &forcing,
            None,
        )
        .unwrap();
        let mut s = KineticState::isotropic(p, grid, 4).unwrap();
        assert!(solver.run(&mut s, -1.0, 0.1, |_, _| Ok(())).is_err());
        let before = s.clone();
        let sum = solver.run(&mut s, 0.0, 0.1, |_, _| Ok(())).unwrap();
        assert_eq!(sum.steps, 0);
        assert_eq!(s.f, before.f);
    }

    #[test]
    fn circle_field_conversion_round_trips() {
        let p = params(0.0, 0.3);
        let grid = Grid2D::new(8).unwrap();
        let basis = AngularBasis::circle(4);
        let values: Vec<AngularFunction> = (0..grid.len())
            .map(|q| {
                let (x, _) = grid.point(q);
                basis.project(|n| {
                    (1.0 + 0.2 * (2.0 * PI * x).cos() * n[0] * n[1] + 0.1 * n[0]) / (2.0 * PI)
                })
            })
            .collect();
        let s = KineticState::from_circle_field(p, grid.clone(), 4, &basis, &values).unwrap();
        let vals = s.nodal_values(12);
        for q in 0..grid.len() {
            let (x, _) = grid.point(q);
            for (j, v) in vals[q].iter().enumerate() {
                let phi = 2.0 * PI * j as f64 / 12.0;
                let ex =
                    (1.0 + 0.2 * (2.0 * PI * x).cos() * phi.cos() * phi.sin() + 0.1 * phi.cos())
                        / (2.0 * PI);
                assert!((v - ex).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn manufactured_solution_is_a_fixed_point_of_the_residual() {
        // at f = f*, u = u* the semi-discrete residual vanishes up to spectral error
        let p = params(0.0, 0.5);
        let grid = Grid2D::new(32).unwrap();
        let mms = KineticManufactured::standard(p, 16);
        let mut s = mms.initial_state(grid).unwrap();
        let cfg = KineticConfig {
            n: 32,
            m_max: 16,
            picard_tol: 1e-14,
            ..Default::default()
        };
        let solver = KineticSolver::new(cfg, &mms, Some(&mms)).unwrap();
        solver.initialize(&mut s).unwrap();
        let (_, eu) = mms.errors(&s);
        assert!(eu < 1e-11, "velocity error {eu:e}");
        let mut rhs = solver.rhs(&s);
        let y = s.flatten();
        let n = rhs.eval(&y, 0.0).unwrap();
        let lin = solver.linear_part(&s);
        let dt_exact = {
            let d = 1e-6;
            let a = mms.exact_modes(&s.grid, d).concat();
            let b = mms.exact_modes(&s.grid, -d).concat();
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y) / (2.0 * d))
                .collect::<Vec<_>>()
        };
        let res = (0..y.len())
            .map(|i| (y[i] * lin[i] + n[i] - dt_exact[i]).norm())
            .fold(0.0, f64::max);
        assert!(res < 1e-7, "residual {res:e}");
    }
}
