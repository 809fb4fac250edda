//! Calculus on the unit sphere S^{d-1} for d = 2 and d = 3.
//!
//! Functions are stored as coefficient vectors in an orthonormal real basis:
//! Fourier modes on the circle and real spherical harmonics on S^2. Nodal
//! values live on a quadrature grid that integrates products of basis
//! functions exactly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{DssError, Result};
use crate::params::omega;

/// Orthonormal angular basis with its quadrature grid.
#[derive(Debug, Clone)]
pub struct AngularBasis {
    dim: usize,
    degree: usize,
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    /// Basis values, nodes x coefficients.
    values: DMatrix<f64>,
    /// Surface-gradient components, nodes x coefficients.
    grad: [DMatrix<f64>; 3],
    harmonic_degree: Vec<usize>,
}

/// Angular function as coefficients in an `AngularBasis`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularFunction {
    pub coeffs: DVector<f64>,
}

impl AngularFunction {
    pub fn zeros(n: usize) -> Self {
        AngularFunction {
            coeffs: DVector::zeros(n),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        AngularFunction {
            coeffs: &self.coeffs * s,
        }
    }

    pub fn add(&self, other: &AngularFunction) -> Self {
        AngularFunction {
            coeffs: &self.coeffs + &other.coeffs,
        }
    }

    pub fn sub(&self, other: &AngularFunction) -> Self {
        AngularFunction {
            coeffs: &self.coeffs - &other.coeffs,
        }
    }

    /// Root-mean-square of the coefficients, i.e. the L2(S^{d-1}) norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

impl AngularBasis {
    /// Fourier basis on S^1 with modes |m| <= m_max.
    pub fn circle(m_max: usize) -> Self {
        let k = 2 * m_max + 6;
        let nc = 2 * m_max + 1;
        let mut nodes = Vec::with_capacity(k);
        let mut values = DMatrix::zeros(k, nc);
        let mut grad = [
            DMatrix::zeros(k, nc),
            DMatrix::zeros(k, nc),
            DMatrix::zeros(k, nc),
        ];
        let a0 = 1.0 / (2.0 * PI).sqrt();
        let am = 1.0 / PI.sqrt();
        for q in 0..k {
            let phi = 2.0 * PI * q as f64 / k as f64;
            let (s, c) = phi.sin_cos();
            nodes.push(Vector3::new(c, s, 0.0));
            let perp = Vector3::new(-s, c, 0.0);
            values[(q, 0)] = a0;
            for m in 1..=m_max {
                let mf = m as f64;
                let (sm, cm) = (mf * phi).sin_cos();
                values[(q, 2 * m - 1)] = am * cm;
                values[(q, 2 * m)] = am * sm;
                let dc = -am * mf * sm;
                let ds = am * mf * cm;
                for i in 0..3 {
                    grad[i][(q, 2 * m - 1)] = dc * perp[i];
                    grad[i][(q, 2 * m)] = ds * perp[i];
                }
            }
        }
        let mut harmonic_degree = vec![0];
        for m in 1..=m_max {
            harmonic_degree.push(m);
            harmonic_degree.push(m);
        }
        AngularBasis {
            dim: 2,
            degree: m_max,
            weights: vec![2.0 * PI / k as f64; k],
            nodes,
            values,
            grad,
            harmonic_degree,
        }
    }

    /// Real spherical harmonics on S^2 with degrees l <= l_max.
    pub fn sphere(l_max: usize) -> Self {
        let n_theta = l_max + 4;
        let n_phi = 2 * l_max + 6;
        let (xs, ws) = gauss_legendre(n_theta);
        let nc = (l_max + 1) * (l_max + 1);
        let nn = n_theta * n_phi;
        let mut nodes = Vec::with_capacity(nn);
        let mut weights = Vec::with_capacity(nn);
        let mut values = DMatrix::zeros(nn, nc);
        let mut grad = [
            DMatrix::zeros(nn, nc),
            DMatrix::zeros(nn, nc),
            DMatrix::zeros(nn, nc),
        ];
        let mut q = 0;
        for (&x, &w) in xs.iter().zip(&ws) {
            let s = (1.0 - x * x).sqrt();
            let (p, dp) = normalized_legendre(l_max, x);
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                let (sp, cp) = phi.sin_cos();
                nodes.push(Vector3::new(s * cp, s * sp, x));
                weights.push(w * 2.0 * PI / n_phi as f64);
                let e_theta = Vector3::new(x * cp, x * sp, -s);
                let e_phi = Vector3::new(-sp, cp, 0.0);
                for l in 0..=l_max {
                    for m in 0..=l {
                        let plm = p[l][m];
                        let dplm = dp[l][m];
                        if m == 0 {
                            let idx = l * l + l;
                            values[(q, idx)] = plm;
                            for i in 0..3 {
                                grad[i][(q, idx)] = dplm * e_theta[i];
                            }
                        } else {
                            let mf = m as f64;
                            let r2 = std::f64::consts::SQRT_2;
                            let (sm, cm) = (mf * phi).sin_cos();
                            let ic = l * l + l + m;
                            let is = l * l + l - m;
                            values[(q, ic)] = r2 * plm * cm;
                            values[(q, is)] = r2 * plm * sm;
                            for i in 0..3 {
                                grad[i][(q, ic)] =
                                    r2 * (dplm * cm * e_theta[i] - mf * plm * sm / s * e_phi[i]);
                                grad[i][(q, is)] =
                                    r2 * (dplm * sm * e_theta[i] + mf * plm * cm / s * e_phi[i]);
                            }
                        }
                    }
                }
                q += 1;
            }
        }
        let mut harmonic_degree = Vec::with_capacity(nc);
        for l in 0..=l_max {
            for _ in 0..(2 * l + 1) {
                harmonic_degree.push(l);
            }
        }
        AngularBasis {
            dim: 3,
            degree: l_max,
            nodes,
            weights,
            values,
            grad,
            harmonic_degree,
        }
    }

    /// Basis for dimension `dim` with truncation `degree` (M or L).
    pub fn new(dim: usize, degree: usize) -> Self {
        match dim {
            2 => Self::circle(degree),
            3 => Self::sphere(degree),
            _ => panic!("unsupported dimension {dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_coeffs(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Harmonic degree of each coefficient.
    pub fn harmonic_degree(&self) -> &[usize] {
        &self.harmonic_degree
    }

    /// Laplace-Beltrami eigenvalue of harmonic degree l.
    pub fn eigenvalue(&self, l: usize) -> f64 {
        let l = l as f64;
        match self.dim {
            2 => -l * l,
            _ => -l * (l + 1.0),
        }
    }

    pub fn zeros(&self) -> AngularFunction {
        AngularFunction::zeros(self.n_coeffs())
    }

    /// Nodal values of a function.
    pub fn synthesize(&self, g: &AngularFunction) -> DVector<f64> {
        &self.values * &g.coeffs
    }

    /// Coefficients of the projection of nodal values onto the basis.
    pub fn analyze(&self, nodal: &DVector<f64>) -> AngularFunction {
        let weighted = nodal.component_mul(&DVector::from_column_slice(&self.weights));
        AngularFunction {
            coeffs: self.values.tr_mul(&weighted),
        }
    }

    /// Projects a function given pointwise.
    pub fn project<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> AngularFunction {
        let nodal = DVector::from_iterator(self.n_nodes(), self.nodes.iter().map(f));
        self.analyze(&nodal)
    }

    /// Value at an arbitrary unit vector.
    pub fn evaluate(&self, g: &AngularFunction, n: &Vector3<f64>) -> f64 {
        match self.dim {
            2 => {
                let phi = n[1].atan2(n[0]);
                let mut v = g.coeffs[0] / (2.0 * PI).sqrt();
                for m in 1..=self.degree {
                    let (s, c) = (m as f64 * phi).sin_cos();
                    v += (g.coeffs[2 * m - 1] * c + g.coeffs[2 * m] * s) / PI.sqrt();
                }
                v
            }
            _ => {
                let x = n[2].clamp(-1.0, 1.0);
                let phi = n[1].atan2(n[0]);
                let (p, _) = normalized_legendre(self.degree, x);
                let mut v = 0.0;
                for l in 0..=self.degree {
                    v += g.coeffs[l * l + l] * p[l][0];
                    for m in 1..=l {
                        let (s, c) = (m as f64 * phi).sin_cos();
                        v += std::f64::consts::SQRT_2
                            * p[l][m]
                            * (g.coeffs[l * l + l + m] * c + g.coeffs[l * l + l - m] * s);
                    }
                }
                v
            }
        }
    }

    /// Integral over the sphere of nodal values.
    pub fn quadrature(&self, nodal: &DVector<f64>) -> f64 {
        nodal.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Integral over the sphere of a pointwise integrand.
    pub fn quadrature_fn<F: Fn(&Vector3<f64>) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| f(n) * w)
            .sum()
    }

    /// Angular average (1/omega_d) times the integral.
    pub fn mean(&self, g: &AngularFunction) -> f64 {
        g.coeffs[0] / omega(self.dim).sqrt()
    }

    /// Function with the given angular average and no other content.
    pub fn constant(&self, value: f64) -> AngularFunction {
        let mut g = self.zeros();
        g.coeffs[0] = value * omega(self.dim).sqrt();
        g
    }

    pub fn laplace_beltrami(&self, g: &AngularFunction) -> AngularFunction {
        let coeffs = DVector::from_iterator(
            g.coeffs.len(),
            g.coeffs
                .iter()
                .zip(&self.harmonic_degree)
                .map(|(c, &l)| c * self.eigenvalue(l)),
        );
        AngularFunction { coeffs }
    }

    /// Mean-zero solution of Laplace-Beltrami h = g for mean-zero g.
    pub fn laplace_beltrami_inverse(&self, g: &AngularFunction) -> Result<AngularFunction> {
        let mean = self.mean(g);
        let scale = g.coeffs.amax().max(1.0);
        if mean.abs() > 1e-10 * scale {
            return Err(DssError::Precondition(format!(
                "Laplace-Beltrami inverse needs a mean-zero input, mean = {mean:.3e}"
            )));
        }
        let coeffs = DVector::from_iterator(
            g.coeffs.len(),
            g.coeffs.iter().zip(&self.harmonic_degree).map(|(c, &l)| {
                if l == 0 {
                    0.0
                } else {
                    c / self.eigenvalue(l)
                }
            }),
        );
        Ok(AngularFunction { coeffs })
    }

    /// Nodal surface gradient of a function, one vector per node.
    pub fn gradient(&self, g: &AngularFunction) -> Vec<Vector3<f64>> {
        let gx = &self.grad[0] * &g.coeffs;
        let gy = &self.grad[1] * &g.coeffs;
        let gz = &self.grad[2] * &g.coeffs;
        (0..self.n_nodes())
            .map(|q| Vector3::new(gx[q], gy[q], gz[q]))
            .collect()
    }

    /// div_n(pi_n^perp A n g) = grad_n g . A n - d (n n : A) g for trace-free A.
    pub fn spherical_divergence(
        &self,
        a: &Matrix3<f64>,
        g: &AngularFunction,
    ) -> Result<AngularFunction> {
        check_trace_free(a)?;
        Ok(self.analyze(&self.spherical_divergence_nodal(a, g)))
    }

    fn spherical_divergence_nodal(&self, a: &Matrix3<f64>, g: &AngularFunction) -> DVector<f64> {
        let vals = self.synthesize(g);
        let grads = self.gradient(g);
        let d = self.dim as f64;
        DVector::from_iterator(
            self.n_nodes(),
            self.nodes
                .iter()
                .zip(grads.iter())
                .zip(vals.iter())
                .map(|((n, gr), v)| {
                    let an = a * n;
                    gr.dot(&an) - d * n.dot(&an) * v
                }),
        )
    }

    /// Galerkin matrix of g -> div_n(pi_n^perp A n g) on the basis.
    pub fn rotation_operator(&self, a: &Matrix3<f64>) -> Result<DMatrix<f64>> {
        check_trace_free(a)?;
        let nn = self.n_nodes();
        let nc = self.n_coeffs();
        let d = self.dim as f64;
        let mut nodal = DMatrix::zeros(nn, nc);
        for q in 0..nn {
            let n = &self.nodes[q];
            let an = a * n;
            let nan = n.dot(&an);
            let w = self.weights[q];
            for j in 0..nc {
                let gdot = self.grad[0][(q, j)] * an[0]
                    + self.grad[1][(q, j)] * an[1]
                    + self.grad[2][(q, j)] * an[2];
                nodal[(q, j)] = w * (gdot - d * nan * self.values[(q, j)]);
            }
        }
        Ok(self.values.tr_mul(&nodal))
    }
}

fn check_trace_free(a: &Matrix3<f64>) -> Result<()> {
    let tr = a.trace();
    if tr.abs() > 1e-12 * a.amax().max(1.0) {
        return Err(DssError::Precondition(format!(
            "rotation flux needs a trace-free matrix, trace = {tr:.3e}"
        )));
    }
    Ok(())
}

/// Closed-form integral of n_{i1} ... n_{ik} over S^{d-1} for k <= 6.
pub fn moment_integral(dim: usize, indices: &[usize]) -> Result<f64> {
    let k = indices.len();
    if k > 6 {
        return Err(DssError::Precondition(format!(
            "closed-form moments are available up to order 6, got {k}"
        )));
    }
    if k % 2 == 1 {
        return Ok(0.0);
    }
    let d = dim as f64;
    let mut denom = 1.0;
    for j in 0..k / 2 {
        denom *= d + 2.0 * j as f64;
    }
    Ok(omega(dim) * count_pairings(indices) as f64 / denom)
}

/// Number of perfect matchings of the index list pairing equal indices.
fn count_pairings(indices: &[usize]) -> usize {
    if indices.is_empty() {
        return 1;
    }
    let first = indices[0];
    let rest = &indices[1..];
    let mut total = 0;
    for (j, &v) in rest.iter().enumerate() {
        if v == first {
            let remaining: Vec<usize> = rest
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &x)| x)
                .collect();
            total += count_pairings(&remaining);
        }
    }
    total
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

type LegendreTable = Vec<Vec<f64>>;

/// Orthonormalized associated Legendre functions and their theta-derivatives
/// at x = cos(theta), indexed [l][m] for 0 <= m <= l <= l_max.
fn normalized_legendre(l_max: usize, x: f64) -> (LegendreTable, LegendreTable) {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; l_max + 1]; l_max + 1];
    p[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=l_max {
        let mf = m as f64;
        p[m][m] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..l_max {
        p[m + 1][m] = (2.0 * m as f64 + 3.0).sqrt() * x * p[m][m];
    }
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    let mut dp = vec![vec![0.0; l_max + 1]; l_max + 1];
    if s > 0.0 {
        for l in 0..=l_max {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let lower = if l > m {
                    ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[l - 1][m]
                } else {
                    0.0
                };
                dp[l][m] = (lf * x * p[l][m] - lower) / s;
            }
        }
    }
    (p, dp)
}

/// Identity of dimension d embedded in the upper-left block of a 3x3 matrix.
pub fn identity(dim: usize) -> Matrix3<f64> {
    let mut i = Matrix3::zeros();
    for k in 0..dim {
        i[(k, k)] = 1.0;
    }
    i
}
