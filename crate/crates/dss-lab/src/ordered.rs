//! Hierarchical and Boussinesq solutions of the second-order fluid limits on
//! the 2D torus.
//!
//! The hierarchy uses the inhomogeneous coefficients, which multiply the
//! density; with the uniform density 1/omega_d it reduces to the homogeneous
//! second-order fluid.

use std::collections::HashMap;

use nalgebra::Matrix3;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularBasis, AngularFunction};
use crate::closure::{a2_prime_field, field_jets, g1_project, g2_project, smooth};
use crate::error::{DssError, Result};
use crate::etd::{EtdWeights, Scheme};
use crate::forcing::VelocityForcing;
use crate::kinetic::{synthesize_angles, KineticState};
use crate::params::{omega, second_order_coeffs, ModelParams, OrderedFluidCoefficients};
use crate::spectral::{Grid2D, NodalTensor, SpectralScalar, SpectralVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub n: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Advance (u1, rho1) as well as (u0, rho0).
    pub order1: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            n: 32,
            dt: 2.5e-3,
            scheme: Scheme::Etd2,
            picard_tol: 1e-12,
            picard_max_iter: 200,
            order1: true,
        }
    }
}

/// Order-0 and order-1 fields with the PDE-exact time derivatives of order 0.
#[derive(Debug, Clone)]
pub struct HierarchyState {
    pub params: ModelParams,
    pub coeffs: OrderedFluidCoefficients,
    pub grid: Grid2D,
    pub rho0: SpectralScalar,
    pub u0: SpectralVector,
    pub rho1: SpectralScalar,
    pub u1: SpectralVector,
    pub drho0: SpectralScalar,
    pub du0: SpectralVector,
    pub t: f64,
}

impl HierarchyState {
    /// (u0 + eps u1, rho0 + eps rho1).
    pub fn hierarchical_solution(&self, eps: f64) -> (SpectralVector, SpectralScalar) {
        (
            self.u0.add(&self.u1.scale(eps)),
            self.rho0.add(&self.rho1.scale(eps)),
        )
    }

    fn flatten(&self) -> Vec<Complex64> {
        let mut y = self.rho0.data.clone();
        y.extend_from_slice(&self.rho1.data);
        if self.params.is_navier_stokes() {
            for v in [&self.u0, &self.u1] {
                y.extend_from_slice(&v.c[0].data);
                y.extend_from_slice(&v.c[1].data);
            }
        }
        y
    }

    fn unflatten(&mut self, y: &[Complex64]) {
        let b = split(y, self.grid.len());
        self.rho0 = b.rho0;
        self.rho1 = b.rho1;
        if let (Some(u0), Some(u1)) = (b.u0, b.u1) {
            self.u0 = u0;
            self.u1 = u1;
        }
    }
}

struct Blocks {
    rho0: SpectralScalar,
    rho1: SpectralScalar,
    u0: Option<SpectralVector>,
    u1: Option<SpectralVector>,
}

fn split(y: &[Complex64], len: usize) -> Blocks {
    let sc = |i: usize| SpectralScalar {
        data: y[i * len..(i + 1) * len].to_vec(),
    };
    let vec = |i: usize| SpectralVector {
        c: [sc(i), sc(i + 1)],
    };
    let ns = y.len() > 2 * len;
    Blocks {
        rho0: sc(0),
        rho1: sc(1),
        u0: ns.then(|| vec(2)),
        u1: ns.then(|| vec(4)),
    }
}

/// Monitors of the hierarchy at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDiagnostics {
    pub t: f64,
    pub rho0_min: f64,
    pub rho0_max: f64,
    pub rho0_mass: f64,
    pub rho1_mass: f64,
    pub grad_u0_l2: f64,
    pub grad_u1_l2: f64,
    /// ||h||_{H^-1}; bounds ||grad u0|| in Stokes mode.
    pub h_hm1: f64,
    pub max_divergence: f64,
}

/// A1(u) = grad u + grad u^T, nodal.
pub fn strain(grid: &Grid2D, u: &SpectralVector) -> NodalTensor {
    let g = grid.velocity_gradient(u);
    NodalTensor::from_fn(grid.len(), |p| {
        let m = g.at(p);
        m + m.transpose()
    })
}

/// Dealiased div(u s) for nodal u.
fn flux_divergence(grid: &Grid2D, u: &[Vec<f64>; 2], s: &SpectralScalar) -> SpectralScalar {
    let sn = grid.inverse(s);
    let f0: Vec<f64> = (0..grid.len()).map(|p| u[0][p] * sn[p]).collect();
    let f1: Vec<f64> = (0..grid.len()).map(|p| u[1][p] * sn[p]).collect();
    grid.dealias(
        &grid
            .deriv(&grid.forward(&f0), 0)
            .add(&grid.deriv(&grid.forward(&f1), 1)),
    )
}

/// Dealiased div(a (x) b + b (x) a) / 2 for nodal a, b; the transport term of
/// the momentum equation when a = b.
fn sym_convection(grid: &Grid2D, a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]) -> SpectralVector {
    let t = NodalTensor::from_fn(grid.len(), |p| {
        let mut m = Matrix3::zeros();
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = 0.5 * (a[i][p] * b[j][p] + b[i][p] * a[j][p]);
            }
        }
        m
    });
    grid.tensor_divergence(&t)
}

fn scale_field(t: &NodalTensor, s: &[f64], c: f64) -> NodalTensor {
    NodalTensor::from_fn(t.len(), |p| t.at(p) * (c * s[p]))
}

/// Order-0 and order-1 right-hand sides at one stage.
struct Stage {
    u0: SpectralVector,
    u1: SpectralVector,
    drho0: SpectralScalar,
    du0: SpectralVector,
    n: Vec<Complex64>,
}

pub struct HierarchySolver<'a> {
    pub cfg: HierarchyConfig,
    forcing: &'a dyn VelocityForcing,
}

impl<'a> HierarchySolver<'a> {
    pub fn new(cfg: HierarchyConfig, forcing: &'a dyn VelocityForcing) -> Result<Self> {
        if !(cfg.dt > 0.0) || !(cfg.picard_tol > 0.0) {
            return Err(DssError::InvalidParams(
                "dt and Picard tolerance must be positive".into(),
            ));
        }
        Ok(HierarchySolver { cfg, forcing })
    }

    /// Initial state with rho0 = rho_init, rho1 = 0, and in Navier-Stokes mode
    /// u0 = u_init, u1 = 0.
    pub fn initial_state(
        &self,
        params: ModelParams,
        grid: Grid2D,
        rho_init: &SpectralScalar,
        u_init: Option<&SpectralVector>,
    ) -> Result<HierarchyState> {
        params.validate_coupled()?;
        let mass = rho_init.data[0].re * omega(params.dim);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(DssError::InvalidParams(format!(
                "rho_init must have angular mass 1, got {mass}"
            )));
        }
        let len = grid.len();
        let u0 = match (params.is_navier_stokes(), u_init) {
            (true, Some(u)) => grid.dealias_vector(&grid.leray_project(u)),
            (true, None) => {
                return Err(DssError::InvalidParams(
                    "Navier-Stokes mode needs an initial velocity".into(),
                ))
            }
            (false, _) => SpectralVector::zeros(len),
        };
        let mut s = HierarchyState {
            params,
            coeffs: second_order_coeffs(&params),
            rho0: grid.dealias(rho_init),
            u0,
            rho1: SpectralScalar::zeros(len),
            u1: SpectralVector::zeros(len),
            drho0: SpectralScalar::zeros(len),
            du0: SpectralVector::zeros(len),
            grid,
            t: 0.0,
        };
        self.complete(&mut s)?;
        Ok(s)
    }

    fn linear_part(&self, s: &HierarchyState) -> Vec<f64> {
        let grid = &s.grid;
        let pe_inv = s.params.pe.inverse();
        let mut lin: Vec<f64> = Vec::new();
        for _ in 0..2 {
            lin.extend((0..grid.len()).map(|p| -grid.k2(p) * pe_inv));
        }
        if s.params.is_navier_stokes() {
            for _ in 0..4 {
                lin.extend((0..grid.len()).map(|p| -grid.k2(p) / s.params.re));
            }
        }
        lin
    }

    fn vv_stokes(
        &self,
        s: &HierarchyState,
        rho0: &SpectralScalar,
        rhs: &SpectralVector,
        init: &SpectralVector,
    ) -> Result<SpectralVector> {
        Ok(s.grid
            .variable_viscosity_stokes(
                rho0,
                s.coeffs.eta1,
                rhs,
                Some(init),
                self.cfg.picard_tol,
                self.cfg.picard_max_iter,
            )?
            .u)
    }

    /// d_t rho0 and d_t u0 at the given order-0 fields.
    pub fn time_derivatives_order0(
        &self,
        s: &HierarchyState,
    ) -> Result<(SpectralVector, SpectralScalar)> {
        let st = self.stage(s, &s.flatten(), s.t, false)?;
        Ok((st.du0, st.drho0))
    }

    /// A2'(rho0, u0) at the current state.
    pub fn a2_prime(&self, s: &HierarchyState) -> NodalTensor {
        a2_prime_with(
            &s.grid,
            &s.rho0,
            &s.u0,
            &s.drho0,
            &s.du0,
            s.params.pe.inverse(),
        )
    }

    /// Right-hand side of the order-1 momentum equation as a stress:
    /// 2 eta1 rho1 D(u0) + gamma1 A2' + gamma2 rho0 A1(u0)^2.
    pub fn order1_stress(&self, s: &HierarchyState) -> NodalTensor {
        order1_stress_with(s, &s.rho0, &s.u0, &s.rho1, &self.a2_prime(s))
    }

    fn stage(&self, s: &HierarchyState, y: &[Complex64], t: f64, order1: bool) -> Result<Stage> {
        let grid = &s.grid;
        let len = grid.len();
        let p = &s.params;
        let c = &s.coeffs;
        let pe_inv = p.pe.inverse();
        let ns = p.is_navier_stokes();
        let b = split(y, len);
        let h = self.forcing.h(grid, t);
        let rho0_n = grid.inverse(&b.rho0);
        // order 0
        let u0 = match b.u0 {
            Some(u) => u,
            None => self.vv_stokes(s, &b.rho0, &h, &s.u0)?,
        };
        let u0n = grid.inverse_vector(&u0);
        let a1 = strain(grid, &u0);
        let n_rho0 = flux_divergence(grid, &u0n, &b.rho0).scale(-1.0);
        let drho0 = grid.laplacian(&b.rho0).scale(pe_inv).add(&n_rho0);
        let (n_u0, du0) = if ns {
            let visc = grid.tensor_divergence(&scale_field(&a1, &rho0_n, c.eta1));
            let rhs = h
                .add(&visc)
                .sub(&sym_convection(grid, &u0n, &u0n).scale(p.re));
            let n = grid.leray_project(&rhs).scale(1.0 / p.re);
            let du = n.add(&grid.laplacian_vector(&u0).scale(1.0 / p.re));
            (Some(n), du)
        } else {
            let drho_n = grid.inverse(&drho0);
            let rhs = grid
                .tensor_divergence(&scale_field(&a1, &drho_n, c.eta1))
                .add(&self.forcing.dt_h(grid, t));
            (None, self.vv_stokes(s, &b.rho0, &rhs, &s.du0)?)
        };
        let mut n = n_rho0.data.clone();
        // order 1
        let zero_v = SpectralVector::zeros(len);
        let (u1, n_rho1, n_u1) = if order1 {
            let a2 = a2_prime_with(grid, &b.rho0, &u0, &drho0, &du0, pe_inv);
            let t1 = order1_stress_with(s, &b.rho0, &u0, &b.rho1, &a2);
            let src = grid.tensor_divergence(&t1);
            let u1 = match &b.u1 {
                Some(u) => u.clone(),
                None => self.vv_stokes(s, &b.rho0, &src, &s.u1)?,
            };
            let u1n = grid.inverse_vector(&u1);
            let n_rho1 = flux_divergence(grid, &u0n, &b.rho1)
                .add(&flux_divergence(grid, &u1n, &b.rho0))
                .scale(-1.0)
                .add(&grid.laplacian(&b.rho0).scale(c.mu0));
            let n_u1 = if ns {
                let visc =
                    grid.tensor_divergence(&scale_field(&strain(grid, &u1), &rho0_n, c.eta1));
                let conv = sym_convection(grid, &u0n, &u1n).scale(2.0 * p.re);
                Some(
                    grid.leray_project(&src.add(&visc).sub(&conv))
                        .scale(1.0 / p.re),
                )
            } else {
                None
            };
            (u1, n_rho1, n_u1)
        } else {
            (
                zero_v.clone(),
                SpectralScalar::zeros(len),
                ns.then(|| zero_v.clone()),
            )
        };
        n.extend_from_slice(&n_rho1.data);
        if let (Some(a), Some(b)) = (n_u0, n_u1) {
            for v in [a, b] {
                n.extend_from_slice(&v.c[0].data);
                n.extend_from_slice(&v.c[1].data);
            }
        }
        Ok(Stage {
            u0,
            u1,
            drho0,
            du0,
            n,
        })
    }

    /// Recomputes velocities (Stokes) and order-0 time derivatives, e.g.
    /// after `t` or the coefficients were changed.
    pub fn complete(&self, s: &mut HierarchyState) -> Result<()> {
        let st = self.stage(s, &s.flatten(), s.t, self.cfg.order1)?;
        s.u0 = st.u0;
        s.u1 = st.u1;
        s.drho0 = st.drho0;
        s.du0 = st.du0;
        Ok(())
    }

    fn advance(&self, s: &mut HierarchyState, w: &EtdWeights) -> Result<()> {
        let y = s.flatten();
        let t = s.t;
        let order1 = self.cfg.order1;
        let mut work = s.clone();
        let y1 = w.step(&y, t, |v, tt| {
            let st = self.stage(&work, v, tt, order1)?;
            // warm starts for the next Picard solves
            work.u0 = st.u0;
            work.u1 = st.u1;
            work.du0 = st.du0;
            Ok(st.n)
        })?;
        s.u0 = work.u0;
        s.u1 = work.u1;
        s.du0 = work.du0;
        s.unflatten(&y1);
        s.t = t + w.h;
        self.complete(s)
    }

    pub fn step(&self, s: &mut HierarchyState, dt: f64) -> Result<()> {
        let w = EtdWeights::new(self.cfg.scheme, &self.linear_part(s), dt);
        self.advance(s, &w)
    }

    pub fn diagnostics(&self, s: &HierarchyState) -> HierarchyDiagnostics {
        let grid = &s.grid;
        let r = grid.inverse(&s.rho0);
        let div = |u: &SpectralVector| {
            grid.divergence(u)
                .data
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max)
        };
        HierarchyDiagnostics {
            t: s.t,
            rho0_min: r.iter().cloned().fold(f64::INFINITY, f64::min),
            rho0_max: r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            rho0_mass: s.rho0.data[0].re * omega(s.params.dim),
            rho1_mass: s.rho1.data[0].re,
            grad_u0_l2: grid.h1_seminorm_vector(&s.u0),
            grad_u1_l2: grid.h1_seminorm_vector(&s.u1),
            h_hm1: grid.hm1_norm_vector(&self.forcing.h(grid, s.t)),
            max_divergence: div(&s.u0).max(div(&s.u1)),
        }
    }

    /// Integrates to `t_end` with hooks every `interval` (and at the start).
    pub fn run<H>(
        &self,
        s: &mut HierarchyState,
        t_end: f64,
        interval: f64,
        mut hook: H,
    ) -> Result<Vec<HierarchyDiagnostics>>
    where
        H: FnMut(&HierarchyState) -> Result<()>,
    {
        if !(t_end >= s.t) || !(interval > 0.0) {
            return Err(DssError::InvalidParams(
                "need t_end >= t and a positive hook interval".into(),
            ));
        }
        let lin = self.linear_part(s);
        let mut cache: HashMap<u64, EtdWeights> = HashMap::new();
        let tiny = 1e-12 * t_end.abs().max(1.0);
        let mut records = vec![self.diagnostics(s)];
        hook(s)?;
        let mut next_hook = s.t + interval;
        while s.t < t_end - tiny {
            let target = next_hook.min(t_end);
            let mut dt = self.cfg.dt.min(target - s.t);
            if target - s.t - dt < tiny {
                dt = target - s.t;
            }
            let w = cache
                .entry(dt.to_bits())
                .or_insert_with(|| EtdWeights::new(self.cfg.scheme, &lin, dt));
            self.advance(s, w)?;
            if (target - s.t).abs() < tiny {
                s.t = target;
            }
            if s.t >= next_hook - tiny {
                records.push(self.diagnostics(s));
                hook(s)?;
                next_hook += interval;
            }
        }
        Ok(records)
    }

    /// Kinetic initial data rho0 + eps g1 (+ eps^2 g2 for order 2) at the
    /// current state; order 0 gives the ill-prepared data rho0.
    pub fn well_prepared_f0(
        &self,
        s: &HierarchyState,
        eps: f64,
        order: usize,
        m_max: usize,
    ) -> Result<KineticState> {
        if order > 2 {
            return Err(DssError::InvalidParams(format!(
                "well-prepared order must be 0, 1 or 2, got {order}"
            )));
        }
        if m_max < 4 {
            return Err(DssError::InvalidParams(
                "well-prepared data needs m_max >= 4".into(),
            ));
        }
        let grid = &s.grid;
        let params = s.params.with_eps(eps);
        let basis = AngularBasis::circle(4);
        let jets = field_jets(grid, &s.rho0, &s.u0, &self.a2_prime(s), &s.rho1, &s.u1);
        let values: Vec<AngularFunction> = jets
            .iter()
            .map(|j| {
                let mut g = basis.constant(j.rho0);
                if order >= 1 {
                    g = g.add(&g1_project(&basis, &params, j).scale(eps));
                }
                if order == 2 {
                    g = g.add(&g2_project(&basis, &params, j).scale(eps * eps));
                }
                g
            })
            .collect();
        let mut k = KineticState::from_circle_field(params, grid.clone(), m_max, &basis, &values)?;
        k.f[0][0] = Complex64::new(s.rho0.data[0].re, 0.0);
        k.t = s.t;
        let vals = synthesize_angles(&k.nodal_modes(), 4 * (m_max + 1));
        let min = vals.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        let max = vals
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if min < -1e-6 * max {
            return Err(DssError::Negativity { min });
        }
        if params.is_navier_stokes() {
            k.u = s.hierarchical_solution(eps).0;
        }
        Ok(k)
    }
}

fn a2_prime_with(
    grid: &Grid2D,
    rho0: &SpectralScalar,
    u0: &SpectralVector,
    drho0: &SpectralScalar,
    du0: &SpectralVector,
    pe_inv: f64,
) -> NodalTensor {
    let a1 = strain(grid, u0);
    let da1 = strain(grid, du0);
    let r = grid.inverse(rho0);
    let dr = grid.inverse(drho0);
    let dt = smooth(
        grid,
        &NodalTensor::from_fn(grid.len(), |p| a1.at(p) * dr[p] + da1.at(p) * r[p]),
    );
    a2_prime_field(grid, rho0, u0, &dt, pe_inv)
}

fn order1_stress_with(
    s: &HierarchyState,
    rho0: &SpectralScalar,
    u0: &SpectralVector,
    rho1: &SpectralScalar,
    a2: &NodalTensor,
) -> NodalTensor {
    let grid = &s.grid;
    let c = &s.coeffs;
    let a1 = strain(grid, u0);
    let r0 = grid.inverse(rho0);
    let r1 = grid.inverse(rho1);
    NodalTensor::from_fn(grid.len(), |p| {
        let a = a1.at(p);
        a * (c.eta1 * r1[p]) + a2.at(p) * c.gamma1 + a * a * (c.gamma2 * r0[p])
    })
}

/// Residual of the inhomogeneous second-order fluid equations at time t,
/// from snapshots at t - delta, t, t + delta. Time derivatives are central
/// differences. Returns the H^-1 norms of the projected momentum residual
/// and of the density residual.
pub fn second_order_residual(
    grid: &Grid2D,
    params: &ModelParams,
    eps: f64,
    snaps: [(&SpectralScalar, &SpectralVector); 3],
    delta: f64,
    h: &SpectralVector,
) -> (f64, f64) {
    let c = second_order_coeffs(params);
    let pe_inv = params.pe.inverse();
    let (rho, u) = snaps[1];
    let ra1 = |r: &SpectralScalar, v: &SpectralVector| {
        let a = strain(grid, v);
        let rn = grid.inverse(r);
        smooth(grid, &scale_field(&a, &rn, 1.0))
    };
    let before = ra1(snaps[0].0, snaps[0].1);
    let after = ra1(snaps[2].0, snaps[2].1);
    let dt_ra1 = NodalTensor::from_fn(grid.len(), |p| (after.at(p) - before.at(p)) / (2.0 * delta));
    let a2 = a2_prime_field(grid, rho, u, &dt_ra1, pe_inv);
    let a1 = strain(grid, u);
    let rn = grid.inverse(rho);
    let sigma = NodalTensor::from_fn(grid.len(), |p| {
        let a = a1.at(p);
        a * (1.0 + c.eta1 * rn[p]) + a2.at(p) * (eps * c.gamma1) + a * a * (eps * c.gamma2 * rn[p])
    });
    let un = grid.inverse_vector(u);
    let du = snaps[2].1.sub(snaps[0].1).scale(0.5 / delta);
    let mut res = h.add(&grid.tensor_divergence(&sigma));
    if params.is_navier_stokes() {
        res = res.sub(&du.add(&sym_convection(grid, &un, &un)).scale(params.re));
    }
    let mom = grid.hm1_norm_vector(&grid.leray_project(&res));
    let drho = snaps[2].0.sub(snaps[0].0).scale(0.5 / delta);
    let dens = drho
        .sub(&grid.laplacian(rho).scale(pe_inv + eps * c.mu0))
        .add(&flux_divergence(grid, &un, rho));
    let dens_hm1 = (1..grid.len())
        .map(|p| dens.data[p].norm_sqr() / grid.k2(p))
        .sum::<f64>()
        .sqrt();
    (mom, dens_hm1)
}

/// Converged Boussinesq iterate with its outer update history.
#[derive(Debug, Clone)]
pub struct BoussinesqSolution {
    pub u: SpectralVector,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Solves the well-posed Stokes rearrangement of the homogeneous
/// second-order fluid at one instant, by the linearized iteration started
/// from zero. Coefficients are used in the homogeneous normalization.
#[allow(clippy::too_many_arguments)]
pub fn boussinesq_stokes(
    grid: &Grid2D,
    coeffs: &OrderedFluidCoefficients,
    pe_inv: f64,
    eps: f64,
    h: &SpectralVector,
    dt_h: &SpectralVector,
    tol: f64,
    max_iter: usize,
) -> Result<BoussinesqSolution> {
    let c = coeffs.to_homogeneous();
    let eta0 = c.zero_shear_viscosity();
    let (g1, g2) = (c.gamma1, c.gamma2);
    let rhs = h.sub(
        &dt_h
            .sub(&grid.laplacian_vector(h).scale(pe_inv))
            .scale(eps * g1 / eta0),
    );
    let g0 = |u: &SpectralVector| {
        let g = grid.velocity_gradient(u);
        NodalTensor::from_fn(grid.len(), |p| {
            let gm = g.at(p);
            let a = gm + gm.transpose();
            (gm.transpose() * a + a * gm) * g1 + a * a * g2
        })
    };
    let mut u = SpectralVector::zeros(grid.len());
    let mut history = Vec::new();
    let mut last = f64::INFINITY;
    let mut relax = 1.0;
    for it in 1..=max_iter {
        let wn = grid.inverse_vector(&u);
        let f = rhs.add(&grid.tensor_divergence(&g0(&u)).scale(eps));
        // inner solve of -eta0 Laplace v - eps g1 div((w.grad) A1(v)) = f
        let mut v = u.clone();
        let mut inner_ok = false;
        for _ in 0..500 {
            let a = strain(grid, &v);
            let mut conv = NodalTensor::zeros(grid.len());
            for i in 0..2 {
                for j in 0..2 {
                    let comp = grid.forward(&a.c[i][j]);
                    conv.c[i][j] = grid.inverse(&grid.advect(&wn, &comp));
                }
            }
            let next = grid
                .stokes_solve(&f.add(&grid.tensor_divergence(&conv).scale(eps * g1)))
                .scale(1.0 / eta0);
            let d = grid.h1_seminorm_vector(&next.sub(&v));
            v = next;
            if d < 0.1 * tol {
                inner_ok = true;
                break;
            }
        }
        if !inner_ok {
            return Err(DssError::PicardDivergence {
                iterations: it,
                last_update: last,
            });
        }
        let update = v.sub(&u);
        let diff = grid.h1_norm_vector(&update);
        history.push(diff);
        if diff > last {
            relax = 0.5;
        }
        u.axpy(relax, &update);
        if diff < tol {
            return Ok(BoussinesqSolution {
                u,
                iterations: it,
                history,
            });
        }
        if !diff.is_finite() {
            break;
        }
        last = diff;
    }
    Err(DssError::PicardDivergence {
        iterations: history.len(),
        last_update: last,
    })
}

/// Trajectory of the 2D Navier-Stokes Boussinesq rearrangement.
#[derive(Debug, Clone)]
pub struct BoussinesqTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralVector>,
}

/// Integrates the fourth-order regularized Navier-Stokes rearrangement with
/// the linear part (viscosity and bi-Laplacian) treated exactly.
#[allow(clippy::too_many_arguments)]
pub fn boussinesq_ns2d(
    grid: &Grid2D,
    coeffs: &OrderedFluidCoefficients,
    pe_inv: f64,
    eps: f64,
    u_init: &SpectralVector,
    forcing: &dyn VelocityForcing,
    t_end: f64,
    dt: f64,
    interval: f64,
) -> Result<BoussinesqTrajectory> {
    let c = coeffs.to_homogeneous();
    let eta0 = c.zero_shear_viscosity();
    if eta0 < pe_inv {
        return Err(DssError::Precondition(format!(
            "need eta0 >= 1/Pe, got eta0 = {eta0}, 1/Pe = {pe_inv}"
        )));
    }
    if c.gamma1 > 0.0 {
        return Err(DssError::Precondition(
            "the rearrangement assumes gamma1 <= 0".into(),
        ));
    }
    if !(dt > 0.0) || !(interval > 0.0) || !(t_end >= 0.0) {
        return Err(DssError::InvalidParams(
            "dt, interval and t_end must be positive".into(),
        ));
    }
    let len = grid.len();
    let (g1, g2) = (c.gamma1, c.gamma2);
    let mut lin = Vec::with_capacity(2 * len);
    for _ in 0..2 {
        lin.extend((0..len).map(|p| {
            let k2 = grid.k2(p);
            -eta0 * k2 + eps * g1 * (eta0 - pe_inv) * k2 * k2
        }));
    }
    let nonlin = |y: &[Complex64], t: f64| -> Result<Vec<Complex64>> {
        let u = SpectralVector {
            c: [
                SpectralScalar {
                    data: y[..len].to_vec(),
                },
                SpectralScalar {
                    data: y[len..].to_vec(),
                },
            ],
        };
        let un = grid.inverse_vector(&u);
        let g = grid.velocity_gradient(&u);
        let f1 = NodalTensor::from_fn(len, |p| {
            let gm = g.at(p);
            let a = gm + gm.transpose();
            gm.transpose() * gm * (2.0 * g1) + a * a * g2
        });
        let h = forcing.h(grid, t);
        let rhs = h
            .add(&grid.laplacian_vector(&h).scale(eps * g1))
            .add(&grid.tensor_divergence(&f1).scale(eps))
            .sub(&sym_convection(grid, &un, &un));
        let out = grid.leray_project(&rhs);
        let mut v = out.c[0].data.clone();
        v.extend_from_slice(&out.c[1].data);
        Ok(v)
    };
    let u0 = grid.dealias_vector(&grid.leray_project(u_init));
    let mut y = u0.c[0].data.clone();
    y.extend_from_slice(&u0.c[1].data);
    let to_vec = |y: &[Complex64]| SpectralVector {
        c: [
            SpectralScalar {
                data: y[..len].to_vec(),
            },
            SpectralScalar {
                data: y[len..].to_vec(),
            },
        ],
    };
    let mut traj = BoussinesqTrajectory {
        times: vec![0.0],
        snapshots: vec![to_vec(&y)],
    };
    let mut cache: HashMap<u64, EtdWeights> = HashMap::new();
    let tiny = 1e-12 * t_end.max(1.0);
    let mut t = 0.0;
    let mut next_hook = interval;
    while t < t_end - tiny {
        let target = next_hook.min(t_end);
        let mut h = dt.min(target - t);
        if target - t - h < tiny {
            h = target - t;
        }
        let w = cache
            .entry(h.to_bits())
            .or_insert_with(|| EtdWeights::new(Scheme::Etd2, &lin, h));
        y = w.step(&y, t, nonlin)?;
        t += h;
        if (target - t).abs() < tiny {
            t = target;
        }
        if t >= next_hook - tiny {
            traj.times.push(t);
            traj.snapshots.push(to_vec(&y));
            next_hook += interval;
        }
    }
    Ok(traj)
}
