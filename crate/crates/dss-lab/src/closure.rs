//! Closures g1, g2, g3 of the small-Weissenberg expansion, particle stresses
//! and Rivlin-Ericksen tensors.
//!
//! Closures are evaluated pointwise from a [`ClosureJet`], the local values of
//! densities, velocity gradients and their derivatives at one point of space.

use nalgebra::{Matrix3, Vector3};

use crate::angular::{identity, AngularBasis, AngularFunction};
use crate::error::{DssError, Result};
use crate::params::{omega, ModelParams};
use crate::spectral::{Grid2D, NodalTensor, SpectralScalar, SpectralVector};

/// Local data entering g1 and g2 at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureJet {
    pub rho0: f64,
    pub grad_rho0: Vector3<f64>,
    pub hess_rho0: Matrix3<f64>,
    pub grad_u0: Matrix3<f64>,
    /// d_k D(u0), indexed by k.
    pub grad_d0: [Matrix3<f64>; 3],
    /// A2'(rho0, u0).
    pub a2_prime: Matrix3<f64>,
    pub rho1: f64,
    pub grad_rho1: Vector3<f64>,
    pub grad_u1: Matrix3<f64>,
}

impl ClosureJet {
    pub fn zero() -> Self {
        ClosureJet {
            rho0: 0.0,
            grad_rho0: Vector3::zeros(),
            hess_rho0: Matrix3::zeros(),
            grad_u0: Matrix3::zeros(),
            grad_d0: [Matrix3::zeros(); 3],
            a2_prime: Matrix3::zeros(),
            rho1: 0.0,
            grad_rho1: Vector3::zeros(),
            grad_u1: Matrix3::zeros(),
        }
    }

    /// Uniform density and gradient with A2'(rho0, u0) = rho0 A2 supplied.
    pub fn homogeneous(rho0: f64, grad_u0: Matrix3<f64>, a2: Matrix3<f64>) -> Self {
        ClosureJet {
            rho0,
            grad_u0,
            a2_prime: a2 * rho0,
            ..ClosureJet::zero()
        }
    }
}

/// Angular closure at every point of a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureField {
    pub values: Vec<AngularFunction>,
}

impl ClosureField {
    /// Largest pointwise |<g>|.
    pub fn max_mean(&self, basis: &AngularBasis) -> f64 {
        self.values
            .iter()
            .map(|g| basis.mean(g).abs())
            .fold(0.0, f64::max)
    }
}

pub fn sym(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// Trace-free part in dimension d.
pub fn deviatoric(a: &Matrix3<f64>, dim: usize) -> Matrix3<f64> {
    a - identity(dim) * (a.trace() / dim as f64)
}

/// g1(n) = -U0/(d-1) n.grad rho0 + 1/2 rho0 n.D(u0) n.
pub fn g1_value(m: &ModelParams, jet: &ClosureJet, n: &Vector3<f64>) -> f64 {
    let d = m.dim as f64;
    let d0 = sym(&jet.grad_u0);
    -m.u0_swim / (d - 1.0) * n.dot(&jet.grad_rho0) + 0.5 * jet.rho0 * n.dot(&(d0 * n))
}

/// g2(n), all five contributions.
pub fn g2_value(m: &ModelParams, jet: &ClosureJet, n: &Vector3<f64>) -> f64 {
    let d = m.dim as f64;
    let c = 1.0 / (d - 1.0);
    let u0 = m.u0_swim;
    let d0 = sym(&jet.grad_u0);
    let d1 = sym(&jet.grad_u1);
    let b = jet.a2_prime * 0.25
        - d0 * d0 * jet.rho0
        - d1 * (d * jet.rho0)
        - d0 * (d * jet.rho1)
        - jet.hess_rho0 * (u0 * u0 * c);
    let d0n = d0 * n;
    let ndn = n.dot(&d0n);
    let div_d0 = Vector3::from_fn(|i, _| (0..3).map(|j| jet.grad_d0[j][(i, j)]).sum());
    let n_grad_d0_n: f64 = (0..3).map(|k| n[k] * n.dot(&(jet.grad_d0[k] * n))).sum();
    let line1 = -c * u0 * n.dot(&jet.grad_rho1);
    let line2 = -(n.dot(&(b * n)) - b.trace() / d) / (2.0 * d);
    let line3 = -u0 * (3.0 * d + 1.0) / (6.0 * (d * d - 1.0))
        * (jet.grad_rho0.dot(n) * ndn + 4.0 * c * jet.grad_rho0.dot(&d0n));
    let line4 = -u0 * jet.rho0 / (6.0 * (d + 1.0)) * (n_grad_d0_n + 4.0 * c * div_d0.dot(n));
    let line5 = 0.125 * jet.rho0 * (ndn * ndn - 2.0 * (d0 * d0).trace() / (d * (d + 2.0)));
    line1 + line2 + line3 + line4 + line5
}

pub fn g1_project(basis: &AngularBasis, m: &ModelParams, jet: &ClosureJet) -> AngularFunction {
    basis.project(|n| g1_value(m, jet, n))
}

pub fn g2_project(basis: &AngularBasis, m: &ModelParams, jet: &ClosureJet) -> AngularFunction {
    basis.project(|n| g2_value(m, jet, n))
}

/// Right-hand side U0 n.grad rho0 + div_n(pi^perp (grad u0) n rho0) of the g1 equation.
pub fn g1_equation_rhs(
    basis: &AngularBasis,
    m: &ModelParams,
    jet: &ClosureJet,
) -> Result<AngularFunction> {
    let swim = basis.project(|n| m.u0_swim * n.dot(&jet.grad_rho0));
    let rot = basis.spherical_divergence(&jet.grad_u0, &basis.constant(jet.rho0))?;
    Ok(swim.add(&rot))
}

/// sigma1[g] = lambda theta int (n n - Id/d) g dn.
pub fn sigma1(basis: &AngularBasis, m: &ModelParams, g: &AngularFunction) -> Matrix3<f64> {
    let vals = basis.synthesize(g);
    let id = identity(m.dim) / m.dim as f64;
    let mut s = Matrix3::zeros();
    for ((n, w), v) in basis.nodes().iter().zip(basis.weights()).zip(vals.iter()) {
        s += (n * n.transpose() - id) * (w * v);
    }
    s * (m.lambda * m.theta)
}

/// sigma2[g, grad u] = lambda int (n n)(grad u)(n n) g dn.
pub fn sigma2(
    basis: &AngularBasis,
    m: &ModelParams,
    g: &AngularFunction,
    grad_u: &Matrix3<f64>,
) -> Matrix3<f64> {
    let vals = basis.synthesize(g);
    let mut s = Matrix3::zeros();
    for ((n, w), v) in basis.nodes().iter().zip(basis.weights()).zip(vals.iter()) {
        s += n * n.transpose() * (w * v * n.dot(&(grad_u * n)));
    }
    s * m.lambda
}

/// Closed form of sigma1[g1]: lambda theta omega/(d(d+2)) rho0 D(u0).
pub fn sigma1_g1_closed(m: &ModelParams, rho0: f64, grad_u0: &Matrix3<f64>) -> Matrix3<f64> {
    let d = m.dim as f64;
    sym(grad_u0) * (m.lambda * m.theta * omega(m.dim) / (d * (d + 2.0)) * rho0)
}

/// Closed form of sigma2[rho, grad u] for isotropic rho: 2 lambda omega/(d(d+2)) rho D(u).
pub fn sigma2_isotropic_closed(m: &ModelParams, rho: f64, grad_u: &Matrix3<f64>) -> Matrix3<f64> {
    let d = m.dim as f64;
    sym(grad_u) * (2.0 * m.lambda * omega(m.dim) / (d * (d + 2.0)) * rho)
}

/// Closed form of sigma2[rho1 + g1, grad u0].
pub fn sigma2_rho1_g1_closed(m: &ModelParams, jet: &ClosureJet) -> Matrix3<f64> {
    let d = m.dim as f64;
    let w = omega(m.dim);
    let d0 = sym(&jet.grad_u0);
    let d0sq = d0 * d0;
    d0 * (2.0 * m.lambda * w / (d * (d + 2.0)) * jet.rho1)
        + (d0sq * 2.0 + identity(m.dim) * (0.5 * d0sq.trace()))
            * (2.0 * m.lambda * w / (d * (d + 2.0) * (d + 4.0)) * jet.rho0)
}

/// Deviatoric part of sigma1[g2] in closed form.
pub fn sigma1_g2_closed_deviatoric(m: &ModelParams, jet: &ClosureJet) -> Matrix3<f64> {
    let d = m.dim as f64;
    let w = omega(m.dim);
    let d0 = sym(&jet.grad_u0);
    let d1 = sym(&jet.grad_u1);
    let b = jet.a2_prime * 0.25
        - d0 * d0 * jet.rho0
        - d1 * (d * jet.rho0)
        - d0 * (d * jet.rho1)
        - jet.hess_rho0 * (m.u0_swim * m.u0_swim / (d - 1.0));
    let s =
        sym(&b) * (-1.0 / (d * d * (d + 2.0))) + d0 * d0 * (jet.rho0 / (d * (d + 2.0) * (d + 4.0)));
    deviatoric(&s, m.dim) * (m.lambda * m.theta * w)
}

/// Time-derivative jets of Rivlin-Ericksen tensors for a spatially uniform
/// velocity gradient. `history[k]` is the k-th time derivative of grad u; the
/// result `a[n - 1][k]` is the k-th time derivative of A_n.
pub fn rivlin_ericksen_uniform(
    history: &[Matrix3<f64>],
    order: usize,
) -> Result<Vec<Vec<Matrix3<f64>>>> {
    check_order(order, history.len())?;
    let mut out: Vec<Vec<Matrix3<f64>>> = vec![history.iter().map(|g| g + g.transpose()).collect()];
    for n in 1..order {
        let prev = &out[n - 1];
        let next = (0..history.len() - n)
            .map(|k| {
                let mut a = prev[k + 1];
                for j in 0..=k {
                    let c = binomial(k, j);
                    a += (history[j].transpose() * prev[k - j] + prev[k - j] * history[j]) * c;
                }
                a
            })
            .collect();
        out.push(next);
    }
    Ok(out)
}

/// Rivlin-Ericksen tensors of a space-dependent velocity on the grid.
/// `history[k]` is the k-th time derivative of u; `pe_inv` inserts the
/// diffusive correction -(1/Pe) Laplace into the material derivative.
/// Returns `a[n - 1][k]`, the k-th time derivative of A_n.
pub fn rivlin_ericksen_field(
    grid: &Grid2D,
    history: &[SpectralVector],
    order: usize,
    pe_inv: f64,
) -> Result<Vec<Vec<NodalTensor>>> {
    check_order(order, history.len())?;
    let grads: Vec<NodalTensor> = history.iter().map(|u| grid.velocity_gradient(u)).collect();
    let vels: Vec<[Vec<f64>; 2]> = history.iter().map(|u| grid.inverse_vector(u)).collect();
    let mut out: Vec<Vec<NodalTensor>> = vec![grads
        .iter()
        .map(|g| tensor_add(g, &g.transpose(), 1.0))
        .collect()];
    for n in 1..order {
        let prev = &out[n - 1];
        let mut next = Vec::new();
        for k in 0..history.len() - n {
            let mut a = tensor_add(&prev[k + 1], &tensor_laplacian(grid, &prev[k]), -pe_inv);
            for j in 0..=k {
                let c = binomial(k, j);
                let conv = tensor_advect(grid, &vels[j], &prev[k - j]);
                let rot = upper_convected(&grads[j], &prev[k - j]);
                a = tensor_add(&a, &smooth(grid, &tensor_add(&conv, &rot, 1.0)), c);
            }
            next.push(a);
        }
        out.push(next);
    }
    Ok(out)
}

/// A2'(rho, u) = (d_t - (1/Pe) Laplace + u.grad)(rho A1) + rho((grad u)^T A1 + A1 grad u),
/// with d_t(rho A1) supplied by the caller.
pub fn a2_prime_field(
    grid: &Grid2D,
    rho: &SpectralScalar,
    u: &SpectralVector,
    dt_rho_a1: &NodalTensor,
    pe_inv: f64,
) -> NodalTensor {
    let g = grid.velocity_gradient(u);
    let a1 = tensor_add(&g, &g.transpose(), 1.0);
    let rho_n = grid.inverse(rho);
    let rho_a1 = smooth(grid, &tensor_scale_field(&a1, &rho_n));
    let vel = grid.inverse_vector(u);
    let mut out = tensor_add(dt_rho_a1, &tensor_laplacian(grid, &rho_a1), -pe_inv);
    let conv = tensor_advect(grid, &vel, &rho_a1);
    let rot = tensor_scale_field(&upper_convected(&g, &a1), &rho_n);
    out = tensor_add(&out, &smooth(grid, &tensor_add(&conv, &rot, 1.0)), 1.0);
    out
}

/// Pointwise closure inputs from spectral fields.
pub fn field_jets(
    grid: &Grid2D,
    rho0: &SpectralScalar,
    u0: &SpectralVector,
    a2_prime: &NodalTensor,
    rho1: &SpectralScalar,
    u1: &SpectralVector,
) -> Vec<ClosureJet> {
    let len = grid.len();
    let r0 = grid.inverse(rho0);
    let r1 = grid.inverse(rho1);
    let gr0 = [grid.deriv(rho0, 0), grid.deriv(rho0, 1)];
    let gr0n = [grid.inverse(&gr0[0]), grid.inverse(&gr0[1])];
    let hess = [
        [
            grid.inverse(&grid.deriv(&gr0[0], 0)),
            grid.inverse(&grid.deriv(&gr0[0], 1)),
        ],
        [
            grid.inverse(&grid.deriv(&gr0[1], 0)),
            grid.inverse(&grid.deriv(&gr0[1], 1)),
        ],
    ];
    let gr1 = [
        grid.inverse(&grid.deriv(rho1, 0)),
        grid.inverse(&grid.deriv(rho1, 1)),
    ];
    let gu0 = grid.velocity_gradient(u0);
    let gu1 = grid.velocity_gradient(u1);
    // d_k D(u0)_{ij} = (d_k d_j u_i + d_k d_i u_j) / 2
    let mut dd0 = [
        [
            [vec![0.0; len], vec![0.0; len]],
            [vec![0.0; len], vec![0.0; len]],
        ],
        [
            [vec![0.0; len], vec![0.0; len]],
            [vec![0.0; len], vec![0.0; len]],
        ],
    ];
    for (k, ddk) in dd0.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let a = grid.deriv(&grid.deriv(&u0.c[i], j), k);
                let b = grid.deriv(&grid.deriv(&u0.c[j], i), k);
                ddk[i][j] = grid.inverse(&a.add(&b).scale(0.5));
            }
        }
    }
    (0..len)
        .map(|p| {
            let mut jet = ClosureJet::zero();
            jet.rho0 = r0[p];
            jet.rho1 = r1[p];
            for i in 0..2 {
                jet.grad_rho0[i] = gr0n[i][p];
                jet.grad_rho1[i] = gr1[i][p];
                for j in 0..2 {
                    jet.hess_rho0[(i, j)] = hess[i][j][p];
                    jet.grad_u0[(i, j)] = gu0.c[i][j][p];
                    jet.grad_u1[(i, j)] = gu1.c[i][j][p];
                    jet.a2_prime[(i, j)] = a2_prime.c[i][j][p];
                    for k in 0..2 {
                        jet.grad_d0[k][(i, j)] = dd0[k][i][j][p];
                    }
                }
            }
            jet
        })
        .collect()
}

pub fn g1_field(basis: &AngularBasis, m: &ModelParams, jets: &[ClosureJet]) -> ClosureField {
    ClosureField {
        values: jets.iter().map(|j| g1_project(basis, m, j)).collect(),
    }
}

pub fn g2_field(basis: &AngularBasis, m: &ModelParams, jets: &[ClosureJet]) -> ClosureField {
    ClosureField {
        values: jets.iter().map(|j| g2_project(basis, m, j)).collect(),
    }
}

/// Homogeneous closures for a uniform, possibly time-dependent gradient.
#[derive(Debug, Clone)]
pub struct HomogeneousClosures {
    pub g1: AngularFunction,
    pub g2: AngularFunction,
    pub g3: AngularFunction,
    /// max |Laplace g3 - rhs| over the quadrature nodes.
    pub residual: f64,
}

/// Solves Laplace_n g3 = d_t g2 + div_n(pi^perp G n g2) at uniform density
/// 1/omega_d, with `history = [G, dG/dt, d2G/dt2]`.
pub fn g3_homogeneous_solve(
    basis: &AngularBasis,
    m: &ModelParams,
    history: &[Matrix3<f64>],
) -> Result<HomogeneousClosures> {
    if m.pe.is_finite() {
        return Err(DssError::Precondition(
            "homogeneous g3 requires Pe = infinity".into(),
        ));
    }
    if m.u0_swim != 0.0 {
        return Err(DssError::Precondition(
            "homogeneous g3 requires u0_swim = 0".into(),
        ));
    }
    if history.len() < 3 {
        return Err(DssError::Precondition(
            "g3 needs grad u and two time derivatives".into(),
        ));
    }
    let d = m.dim as f64;
    let rho0 = 1.0 / omega(m.dim);
    let a = rivlin_ericksen_uniform(&history[..3], 2)?;
    let g = history[0];
    let dm = a[0][0] * 0.5;
    let dd = a[0][1] * 0.5;
    let jet = ClosureJet::homogeneous(rho0, g, a[1][0]);
    let g1 = g1_project(basis, m, &jet);
    let g2 = g2_project(basis, m, &jet);
    let cdot = a[1][1] * 0.25 - (dd * dm + dm * dd);
    let tr_ddd = (dm * dd).trace();
    let dt_g2 = basis.project(|n| {
        let ndn = n.dot(&(dm * n));
        let nddn = n.dot(&(dd * n));
        rho0 * (-(n.dot(&(cdot * n)) - cdot.trace() / d) / (2.0 * d)
            + 0.125 * (2.0 * ndn * nddn - 4.0 * tr_ddd / (d * (d + 2.0))))
    });
    let rhs = dt_g2.add(&basis.spherical_divergence(&g, &g2)?);
    let g3 = basis.laplace_beltrami_inverse(&rhs)?;
    let res = basis
        .synthesize(&basis.laplace_beltrami(&g3).sub(&rhs))
        .amax();
    Ok(HomogeneousClosures {
        g1,
        g2,
        g3,
        residual: res,
    })
}

/// Deviatoric stress coefficients of orders 1, eps, eps^2 obtained from the
/// closures by quadrature: A1 + sigma1[g1] + sigma2[rho0], sigma1[g2] + sigma2[g1],
/// sigma1[g3] + sigma2[g2].
pub fn closure_stress_orders(
    basis: &AngularBasis,
    m: &ModelParams,
    history: &[Matrix3<f64>],
) -> Result<[Matrix3<f64>; 3]> {
    let c = g3_homogeneous_solve(basis, m, history)?;
    let g = history[0];
    let rho = basis.constant(1.0 / omega(m.dim));
    let a1 = g + g.transpose();
    let o0 = a1 + sigma1(basis, m, &c.g1) + sigma2(basis, m, &rho, &g);
    let o1 = sigma1(basis, m, &c.g2) + sigma2(basis, m, &c.g1, &g);
    let o2 = sigma1(basis, m, &c.g3) + sigma2(basis, m, &c.g2, &g);
    Ok([o0, o1, o2].map(|s| deviatoric(&s, m.dim)))
}

/// Deviatoric stress coefficients of orders 1, eps, eps^2 predicted by the
/// third-order fluid law with homogeneous coefficients.
pub fn ordered_stress_orders(
    c: &crate::params::OrderedFluidCoefficients,
    history: &[Matrix3<f64>],
) -> Result<[Matrix3<f64>; 3]> {
    let h = c.to_homogeneous();
    let t = h
        .third
        .ok_or_else(|| DssError::InvalidParams("third-order coefficients missing".into()))?;
    let a = rivlin_ericksen_uniform(&history[..3], 3)?;
    let (a1, a2, a3) = (a[0][0], a[1][0], a[2][0]);
    let o0 = a1 * (h.eta0 + h.eta1);
    let o1 = a2 * h.gamma1 + a1 * a1 * h.gamma2;
    let o2 = a3 * t.kappa1 + (a1 * a2 + a2 * a1) * t.kappa2 + a1 * ((a1 * a1).trace() * t.kappa3);
    Ok([o0, o1, o2].map(|s| deviatoric(&s, h.dim)))
}

fn check_order(order: usize, available: usize) -> Result<()> {
    if order == 0 || order > 3 {
        return Err(DssError::InvalidParams(format!(
            "Rivlin-Ericksen order must be 1..=3, got {order}"
        )));
    }
    if available < order {
        return Err(DssError::Precondition(format!(
            "order {order} needs {order} time levels of grad u, got {available}"
        )));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn tensor_add(a: &NodalTensor, b: &NodalTensor, s: f64) -> NodalTensor {
    let mut out = a.clone();
    for i in 0..2 {
        for j in 0..2 {
            for (x, y) in out.c[i][j].iter_mut().zip(&b.c[i][j]) {
                *x += s * y;
            }
        }
    }
    out
}

fn tensor_scale_field(a: &NodalTensor, f: &[f64]) -> NodalTensor {
    let mut out = a.clone();
    for row in out.c.iter_mut() {
        for comp in row.iter_mut() {
            for (x, y) in comp.iter_mut().zip(f) {
                *x *= y;
            }
        }
    }
    out
}

/// (grad u)^T A + A grad u pointwise.
fn upper_convected(g: &NodalTensor, a: &NodalTensor) -> NodalTensor {
    NodalTensor::from_fn(a.len(), |p| {
        let gm = g.at(p);
        let am = a.at(p);
        gm.transpose() * am + am * gm
    })
}

/// Dealiases each component.
pub fn smooth(grid: &Grid2D, a: &NodalTensor) -> NodalTensor {
    let mut out = a.clone();
    for row in out.c.iter_mut() {
        for comp in row.iter_mut() {
            *comp = grid.inverse(&grid.forward_dealiased(comp));
        }
    }
    out
}

fn tensor_laplacian(grid: &Grid2D, a: &NodalTensor) -> NodalTensor {
    let mut out = a.clone();
    for row in out.c.iter_mut() {
        for comp in row.iter_mut() {
            *comp = grid.inverse(&grid.laplacian(&grid.forward(comp)));
        }
    }
    out
}

fn tensor_advect(grid: &Grid2D, u: &[Vec<f64>; 2], a: &NodalTensor) -> NodalTensor {
    let mut out = a.clone();
    for row in out.c.iter_mut() {
        for comp in row.iter_mut() {
            let s = grid.forward(comp);
            let d0 = grid.inverse(&grid.deriv(&s, 0));
            let d1 = grid.inverse(&grid.deriv(&s, 1));
            *comp = (0..grid.len())
                .map(|p| u[0][p] * d0[p] + u[1][p] * d1[p])
                .collect();
        }
    }
    out
}
