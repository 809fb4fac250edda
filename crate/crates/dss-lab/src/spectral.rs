//! Pseudospectral fields on the periodic unit square.
//!
//! Coefficients are normalized so that the zero mode equals the mean of the
//! field, which on the unit torus is also its integral. Nodal index
//! `j * n + l` refers to the point `(j / n, l / n)`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{DssError, Result};

/// Uniform N x N grid on [0,1)^2 with FFT plans.
#[derive(Clone)]
pub struct Grid2D {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Integer wavenumber of each 1D index, in [-n/2, n/2).
    kint: Vec<i64>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D").field("n", &self.n).finish()
    }
}

/// Complex Fourier coefficients of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralScalar {
    pub data: Vec<Complex64>,
}

/// Two-component vector field in Fourier space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    pub c: [SpectralScalar; 2],
}

/// 2 x 2 tensor field of nodal values, component [i][j] at index i, j.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalTensor {
    pub c: [[Vec<f64>; 2]; 2],
}

impl SpectralScalar {
    pub fn zeros(len: usize) -> Self {
        SpectralScalar {
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        SpectralScalar {
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, o: &SpectralScalar) -> Self {
        SpectralScalar {
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &SpectralScalar) -> Self {
        SpectralScalar {
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// self += s * o
    pub fn axpy(&mut self, s: f64, o: &SpectralScalar) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b * s;
        }
    }

    /// Mean of the field over the torus.
    pub fn mean(&self) -> f64 {
        self.data[0].re
    }
}

impl SpectralVector {
    pub fn zeros(len: usize) -> Self {
        SpectralVector {
            c: [SpectralScalar::zeros(len), SpectralScalar::zeros(len)],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        SpectralVector {
            c: [self.c[0].scale(s), self.c[1].scale(s)],
        }
    }

    pub fn add(&self, o: &SpectralVector) -> Self {
        SpectralVector {
            c: [self.c[0].add(&o.c[0]), self.c[1].add(&o.c[1])],
        }
    }

    pub fn sub(&self, o: &SpectralVector) -> Self {
        SpectralVector {
            c: [self.c[0].sub(&o.c[0]), self.c[1].sub(&o.c[1])],
        }
    }

    pub fn axpy(&mut self, s: f64, o: &SpectralVector) {
        self.c[0].axpy(s, &o.c[0]);
        self.c[1].axpy(s, &o.c[1]);
    }
}

impl NodalTensor {
    pub fn zeros(len: usize) -> Self {
        NodalTensor {
            c: [
                [vec![0.0; len], vec![0.0; len]],
                [vec![0.0; len], vec![0.0; len]],
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.c[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Component matrix at one point, embedded in 3x3.
    pub fn at(&self, p: usize) -> nalgebra::Matrix3<f64> {
        let mut m = nalgebra::Matrix3::zeros();
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = self.c[i][j][p];
            }
        }
        m
    }

    pub fn set(&mut self, p: usize, m: &nalgebra::Matrix3<f64>) {
        for i in 0..2 {
            for j in 0..2 {
                self.c[i][j][p] = m[(i, j)];
            }
        }
    }

    /// Builds a tensor field pointwise.
    pub fn from_fn<F: FnMut(usize) -> nalgebra::Matrix3<f64>>(len: usize, mut f: F) -> Self {
        let mut t = NodalTensor::zeros(len);
        for p in 0..len {
            let m = f(p);
            t.set(p, &m);
        }
        t
    }

    pub fn transpose(&self) -> Self {
        NodalTensor {
            c: [
                [self.c[0][0].clone(), self.c[1][0].clone()],
                [self.c[0][1].clone(), self.c[1][1].clone()],
            ],
        }
    }

    /// Symmetric part.
    pub fn sym(&self) -> Self {
        let off: Vec<f64> = self.c[0][1]
            .iter()
            .zip(&self.c[1][0])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        NodalTensor {
            c: [
                [self.c[0][0].clone(), off.clone()],
                [off, self.c[1][1].clone()],
            ],
        }
    }

    /// Largest pointwise asymmetry and trace.
    pub fn symmetry_and_trace_defect(&self) -> (f64, f64) {
        let mut asym: f64 = 0.0;
        let mut tr: f64 = 0.0;
        for p in 0..self.len() {
            asym = asym.max((self.c[0][1][p] - self.c[1][0][p]).abs());
            tr = tr.max((self.c[0][0][p] + self.c[1][1][p]).abs());
        }
        (asym, tr)
    }
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(DssError::InvalidParams(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let kint = (0..n)
            .map(|i| {
                if i < n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                }
            })
            .collect();
        Ok(Grid2D { n, fwd, inv, kint })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinates of nodal point p.
    pub fn point(&self, p: usize) -> (f64, f64) {
        (
            (p / self.n) as f64 / self.n as f64,
            (p % self.n) as f64 / self.n as f64,
        )
    }

    /// Integer wavenumbers of spectral index p.
    pub fn wave_index(&self, p: usize) -> (i64, i64) {
        (self.kint[p / self.n], self.kint[p % self.n])
    }

    /// Derivative wavevector 2 pi k with the Nyquist component set to zero.
    pub fn wavevector(&self, p: usize) -> (f64, f64) {
        let (a, b) = self.wave_index(p);
        let h = (self.n / 2) as i64;
        let f = |k: i64| if k == -h { 0.0 } else { 2.0 * PI * k as f64 };
        (f(a), f(b))
    }

    /// |2 pi k|^2 for spectral index p.
    pub fn k2(&self, p: usize) -> f64 {
        let (a, b) = self.wave_index(p);
        4.0 * PI * PI * ((a * a + b * b) as f64)
    }

    /// Two-thirds rule: keeps |k_i| <= n/3.
    pub fn in_mask(&self, p: usize) -> bool {
        let (a, b) = self.wave_index(p);
        let cut = self.n as i64 / 3;
        a.abs() <= cut && b.abs() <= cut
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        transpose_in_place(data, n);
        plan.process(data);
        transpose_in_place(data, n);
    }

    pub fn forward(&self, nodal: &[f64]) -> SpectralScalar {
        let mut data: Vec<Complex64> = nodal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut data, false);
        let s = 1.0 / self.len() as f64;
        for v in &mut data {
            *v *= s;
        }
        SpectralScalar { data }
    }

    pub fn forward_complex(&self, nodal: &[Complex64]) -> Vec<Complex64> {
        let mut data = nodal.to_vec();
        self.fft2(&mut data, false);
        let s = 1.0 / self.len() as f64;
        for v in &mut data {
            *v *= s;
        }
        data
    }

    pub fn inverse(&self, s: &SpectralScalar) -> Vec<f64> {
        let mut data = s.data.clone();
        self.fft2(&mut data, true);
        data.into_iter().map(|v| v.re).collect()
    }

    pub fn inverse_complex(&self, s: &[Complex64]) -> Vec<Complex64> {
        let mut data = s.to_vec();
        self.fft2(&mut data, true);
        data
    }

    pub fn forward_vector(&self, u: &[Vec<f64>; 2]) -> SpectralVector {
        SpectralVector {
            c: [self.forward(&u[0]), self.forward(&u[1])],
        }
    }

    pub fn inverse_vector(&self, u: &SpectralVector) -> [Vec<f64>; 2] {
        [self.inverse(&u.c[0]), self.inverse(&u.c[1])]
    }

    /// Samples f at the nodes and transforms.
    pub fn project<F: Fn(f64, f64) -> f64>(&self, f: F) -> SpectralScalar {
        let nodal: Vec<f64> = (0..self.len())
            .map(|p| {
                let (x, y) = self.point(p);
                f(x, y)
            })
            .collect();
        self.forward(&nodal)
    }

    /// Partial derivative along axis 0 or 1.
    pub fn deriv(&self, s: &SpectralScalar, axis: usize) -> SpectralScalar {
        let data = s
            .data
            .iter()
            .enumerate()
            .map(|(p, v)| {
                let k = self.wavevector(p);
                let kk = if axis == 0 { k.0 } else { k.1 };
                v * Complex64::new(0.0, kk)
            })
            .collect();
        SpectralScalar { data }
    }

    pub fn laplacian(&self, s: &SpectralScalar) -> SpectralScalar {
        let data = s
            .data
            .iter()
            .enumerate()
            .map(|(p, v)| v * (-self.k2(p)))
            .collect();
        SpectralScalar { data }
    }

    pub fn laplacian_vector(&self, u: &SpectralVector) -> SpectralVector {
        SpectralVector {
            c: [self.laplacian(&u.c[0]), self.laplacian(&u.c[1])],
        }
    }

    pub fn gradient(&self, s: &SpectralScalar) -> SpectralVector {
        SpectralVector {
            c: [self.deriv(s, 0), self.deriv(s, 1)],
        }
    }

    pub fn divergence(&self, u: &SpectralVector) -> SpectralScalar {
        self.deriv(&u.c[0], 0).add(&self.deriv(&u.c[1], 1))
    }

    /// Zeroes modes outside the two-thirds mask.
    pub fn dealias(&self, s: &SpectralScalar) -> SpectralScalar {
        let data = s
            .data
            .iter()
            .enumerate()
            .map(|(p, v)| {
                if self.in_mask(p) {
                    *v
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        SpectralScalar { data }
    }

    pub fn dealias_in_place(&self, s: &mut [Complex64]) {
        for (p, v) in s.iter_mut().enumerate() {
            if !self.in_mask(p) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn dealias_vector(&self, u: &SpectralVector) -> SpectralVector {
        SpectralVector {
            c: [self.dealias(&u.c[0]), self.dealias(&u.c[1])],
        }
    }

    /// Dealiased product of two fields.
    pub fn product(&self, a: &SpectralScalar, b: &SpectralScalar) -> SpectralScalar {
        let pa = self.inverse(a);
        let pb = self.inverse(b);
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.dealias(&self.forward(&prod))
    }

    /// Transform of nodal values followed by dealiasing.
    pub fn forward_dealiased(&self, nodal: &[f64]) -> SpectralScalar {
        self.dealias(&self.forward(nodal))
    }

    /// Nodal velocity gradient (grad u)_{ij} = d_j u_i.
    pub fn velocity_gradient(&self, u: &SpectralVector) -> NodalTensor {
        NodalTensor {
            c: [
                [
                    self.inverse(&self.deriv(&u.c[0], 0)),
                    self.inverse(&self.deriv(&u.c[0], 1)),
                ],
                [
                    self.inverse(&self.deriv(&u.c[1], 0)),
                    self.inverse(&self.deriv(&u.c[1], 1)),
                ],
            ],
        }
    }

    /// Dealiased divergence (div S)_i = d_j S_ij of a nodal tensor field.
    pub fn tensor_divergence(&self, s: &NodalTensor) -> SpectralVector {
        let mut out = SpectralVector::zeros(self.len());
        for i in 0..2 {
            let a = self.deriv(&self.forward(&s.c[i][0]), 0);
            let b = self.deriv(&self.forward(&s.c[i][1]), 1);
            out.c[i] = self.dealias(&a.add(&b));
        }
        out
    }

    /// Dealiased (u . grad) s for a nodal velocity and spectral scalar.
    pub fn advect(&self, u: &[Vec<f64>; 2], s: &SpectralScalar) -> SpectralScalar {
        let d0 = self.inverse(&self.deriv(s, 0));
        let d1 = self.inverse(&self.deriv(s, 1));
        let prod: Vec<f64> = (0..self.len())
            .map(|p| u[0][p] * d0[p] + u[1][p] * d1[p])
            .collect();
        self.forward_dealiased(&prod)
    }

    /// Leray projection onto divergence-free fields; the mean mode is kept.
    pub fn leray_project(&self, f: &SpectralVector) -> SpectralVector {
        let mut out = f.clone();
        for p in 1..self.len() {
            let (k0, k1) = self.wavevector(p);
            let kk = k0 * k0 + k1 * k1;
            if kk == 0.0 {
                continue;
            }
            let dot = f.c[0].data[p] * k0 + f.c[1].data[p] * k1;
            out.c[0].data[p] -= dot * (k0 / kk);
            out.c[1].data[p] -= dot * (k1 / kk);
        }
        out
    }

    /// Solves -Laplace u + grad p = F, div u = 0, mean u = 0.
    pub fn stokes_solve(&self, f: &SpectralVector) -> SpectralVector {
        let mut out = self.leray_project(f);
        for comp in &mut out.c {
            comp.data[0] = Complex64::new(0.0, 0.0);
            for p in 1..self.len() {
                comp.data[p] /= self.k2(p);
            }
        }
        out
    }

    /// L2 norm on the unit torus via Parseval.
    pub fn l2_norm(&self, s: &SpectralScalar) -> f64 {
        s.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn l2_norm_vector(&self, u: &SpectralVector) -> f64 {
        (self.l2_norm(&u.c[0]).powi(2) + self.l2_norm(&u.c[1]).powi(2)).sqrt()
    }

    /// L2 norm of the gradient.
    pub fn h1_seminorm(&self, s: &SpectralScalar) -> f64 {
        s.data
            .iter()
            .enumerate()
            .map(|(p, v)| v.norm_sqr() * self.k2(p))
            .sum::<f64>()
            .sqrt()
    }

    pub fn h1_seminorm_vector(&self, u: &SpectralVector) -> f64 {
        (self.h1_seminorm(&u.c[0]).powi(2) + self.h1_seminorm(&u.c[1]).powi(2)).sqrt()
    }

    /// Full H1 norm (L2 plus gradient).
    pub fn h1_norm_vector(&self, u: &SpectralVector) -> f64 {
        (self.l2_norm_vector(u).powi(2) + self.h1_seminorm_vector(u).powi(2)).sqrt()
    }

    /// H^{-1} norm of the mean-free part.
    pub fn hm1_norm_vector(&self, u: &SpectralVector) -> f64 {
        let mut acc = 0.0;
        for comp in &u.c {
            for p in 1..self.len() {
                acc += comp.data[p].norm_sqr() / self.k2(p);
            }
        }
        acc.sqrt()
    }

    /// Solves -eta0 Laplace u - div S(grad u) + grad p = F by Picard iteration,
    /// where `stress` maps the nodal velocity gradient to an extra stress.
    pub fn picard_stokes<S>(
        &self,
        f: &SpectralVector,
        eta0: f64,
        mut stress: S,
        init: Option<&SpectralVector>,
        tol: f64,
        max_iter: usize,
    ) -> Result<PicardSolution>
    where
        S: FnMut(&NodalTensor) -> NodalTensor,
    {
        let mut u = match init {
            Some(u) => u.clone(),
            None => self.stokes_solve(f).scale(1.0 / eta0),
        };
        let mut last = f64::INFINITY;
        let mut relax = 1.0;
        let mut history = Vec::new();
        for it in 1..=max_iter {
            let grad = self.velocity_gradient(&u);
            let extra = self.tensor_divergence(&stress(&grad));
            let next = self.stokes_solve(&f.add(&extra)).scale(1.0 / eta0);
            let update = next.sub(&u);
            let diff = self.h1_seminorm_vector(&update);
            history.push(diff);
            if diff > last {
                relax = 0.5;
            }
            u.axpy(relax, &update);
            if diff < tol {
                return Ok(PicardSolution {
                    u,
                    iterations: it,
                    history,
                });
            }
            last = diff;
        }
        Err(DssError::PicardDivergence {
            iterations: max_iter,
            last_update: last,
        })
    }

    /// Solves -div((1 + c0 rho) 2 D(u)) + grad p = h by Picard iteration.
    pub fn variable_viscosity_stokes(
        &self,
        rho: &SpectralScalar,
        c0: f64,
        h: &SpectralVector,
        init: Option<&SpectralVector>,
        tol: f64,
        max_iter: usize,
    ) -> Result<PicardSolution> {
        let rho_nodal = self.inverse(rho);
        let min_rho = rho_nodal.iter().cloned().fold(f64::INFINITY, f64::min);
        if 1.0 + c0 * min_rho <= 0.0 {
            return Err(DssError::Precondition(format!(
                "viscosity 1 + c0 rho must stay positive, min = {}",
                1.0 + c0 * min_rho
            )));
        }
        self.picard_stokes(
            h,
            1.0,
            |g| scaled_strain(g, &rho_nodal, c0),
            init,
            tol,
            max_iter,
        )
    }
}

/// Converged Picard iterate with its update history.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub u: SpectralVector,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// c rho (grad u + grad u^T) pointwise.
pub fn scaled_strain(grad: &NodalTensor, rho: &[f64], c: f64) -> NodalTensor {
    let len = grad.len();
    let mut out = NodalTensor::zeros(len);
    for p in 0..len {
        let s = c * rho[p];
        for i in 0..2 {
            for j in 0..2 {
                out.c[i][j][p] = s * (grad.c[i][j][p] + grad.c[j][i][p]);
            }
        }
    }
    out
}

fn transpose_in_place(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Leading bytes of a binary field snapshot.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DSSF";

/// Nodal field on an N x N grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub name: String,
    pub t: f64,
    /// Row-major nodal values, index `j * n + l` at `(j / n, l / n)`.
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn new(grid: &Grid2D, name: &str, t: f64, s: &SpectralScalar) -> Self {
        Snapshot {
            n: grid.n(),
            name: name.into(),
            t,
            values: grid.inverse(s),
        }
    }

    /// Layout: magic, u32 N, u32 name length, name bytes, f64 t, N^2 f64
    /// values; all little-endian.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.values.len() != self.n * self.n {
            return Err(DssError::InvalidParams(
                "snapshot values do not match N^2".into(),
            ));
        }
        w.write_all(&SNAPSHOT_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.name.len() as u32).to_le_bytes())?;
        w.write_all(self.name.as_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(DssError::InvalidParams("not a field snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let mut name = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| DssError::InvalidParams(format!("snapshot name: {e}")))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let t = f64::from_le_bytes(b8);
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(Snapshot { n, name, t, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Snapshot::read(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Writes the slice x2 = row / N as CSV columns (t, x1, value).
    pub fn write_slice_csv(&self, path: &Path, row: usize) -> Result<()> {
        if row >= self.n {
            return Err(DssError::InvalidParams(format!(
                "slice row {row} outside grid of size {}",
                self.n
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x1", self.name.as_str()])?;
        for j in 0..self.n {
            let x = j as f64 / self.n as f64;
            w.write_record([
                self.t.to_string(),
                x.to_string(),
                self.values[j * self.n + row].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_round_trip() {
        let grid = Grid2D::new(8).unwrap();
        let f = grid.project(|x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos());
        let snap = Snapshot::new(&grid, "rho", 0.25, &f);
        let mut buf = Vec::new();
        snap.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 + 8 + 8 * 64);
        assert_eq!(Snapshot::read(&mut buf.as_slice()).unwrap(), snap);
        assert!(Snapshot::read(&mut &b"XXXX"[..]).is_err());
        // row-major in x1: value at (j/n, 0) is sin(2 pi j / n) + 1
        assert!((snap.values[2 * 8] - 2.0).abs() < 1e-12);
    }

    fn random_smooth(grid: &Grid2D, rng: &mut ChaCha8Rng, kmax: i64) -> SpectralScalar {
        let mut modes = Vec::new();
        for a in -kmax..=kmax {
            for b in -kmax..=kmax {
                modes.push((a, b, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.28)));
            }
        }
        grid.project(|x, y| {
            modes
                .iter()
                .map(|&(a, b, c, ph)| c * (2.0 * PI * (a as f64 * x + b as f64 * y) + ph).cos())
                .sum()
        })
    }

    #[test]
    fn round_trip_and_mean() {
        let g = Grid2D::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nodal: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = g.forward(&nodal);
        let back = g.inverse(&s);
        let err = nodal
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
        let mean = nodal.iter().sum::<f64>() / g.len() as f64;
        assert!((s.mean() - mean).abs() < 1e-15);
        assert!(Grid2D::new(12).is_err());
        assert!(Grid2D::new(4).is_err());
    }

    #[test]
    fn derivatives_are_exact() {
        let g = Grid2D::new(32).unwrap();
        let f = g.project(|x, y| (2.0 * PI * (2.0 * x - 3.0 * y)).sin());
        let d0 = g.inverse(&g.deriv(&f, 0));
        let d1 = g.inverse(&g.deriv(&f, 1));
        for p in 0..g.len() {
            let (x, y) = g.point(p);
            let c = (2.0 * PI * (2.0 * x - 3.0 * y)).cos();
            assert!((d0[p] - 4.0 * PI * c).abs() < 1e-12);
            assert!((d1[p] + 6.0 * PI * c).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_is_exact_for_band_limited() {
        let g = Grid2D::new(32).unwrap();
        let a = g.project(|x, y| (2.0 * PI * (3.0 * x + y)).cos());
        let b = g.project(|x, y| (2.0 * PI * (2.0 * x - 4.0 * y)).sin());
        let p = g.inverse(&g.product(&a, &b));
        for q in 0..g.len() {
            let (x, y) = g.point(q);
            let exact = (2.0 * PI * (3.0 * x + y)).cos() * (2.0 * PI * (2.0 * x - 4.0 * y)).sin();
            assert!((p[q] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn stokes_single_mode() {
        let g = Grid2D::new(16).unwrap();
        let f = SpectralVector {
            c: [
                SpectralScalar::zeros(g.len()),
                g.project(|x, _| (2.0 * PI * x).sin()),
            ],
        };
        let u = g.inverse_vector(&g.stokes_solve(&f));
        for p in 0..g.len() {
            let (x, _) = g.point(p);
            assert!(u[0][p].abs() < 1e-15);
            assert!((u[1][p] - (2.0 * PI * x).sin() / (4.0 * PI * PI)).abs() < 1e-15);
        }
        let grad_p = g.gradient(&g.project(|x, y| (2.0 * PI * (x + 2.0 * y)).cos()));
        assert!(g.l2_norm_vector(&g.stokes_solve(&grad_p)) < 1e-15);
    }

    #[test]
    fn stokes_manufactured_residual() {
        let g = Grid2D::new(32).unwrap();
        let psi = g.project(|x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let u = SpectralVector {
            c: [g.deriv(&psi, 1), g.deriv(&psi, 0).scale(-1.0)],
        };
        let p = g.project(|x, y| (2.0 * PI * (x - y)).sin());
        let f = g.laplacian_vector(&u).scale(-1.0).add(&g.gradient(&p));
        let back = g.stokes_solve(&f);
        assert!(g.l2_norm_vector(&back.sub(&u)) < 1e-12);
    }

    #[test]
    fn variable_viscosity_constant_density() {
        let g = Grid2D::new(16).unwrap();
        let h = SpectralVector {
            c: [
                g.project(|_, y| (2.0 * PI * y).cos()),
                g.project(|x, _| (2.0 * PI * x).sin()),
            ],
        };
        let rho = g.project(|_, _| 0.7);
        let sol = g
            .variable_viscosity_stokes(&rho, 0.4, &h, None, 1e-13, 100)
            .unwrap();
        let expect = g.stokes_solve(&h).scale(1.0 / (1.0 + 0.4 * 0.7));
        assert!(g.l2_norm_vector(&sol.u.sub(&expect)) < 1e-13);
        let plain = g
            .variable_viscosity_stokes(&rho, 0.0, &h, None, 1e-13, 100)
            .unwrap();
        assert!(g.l2_norm_vector(&plain.u.sub(&g.stokes_solve(&h))) < 1e-15);
    }

    #[test]
    fn variable_viscosity_manufactured() {
        let g = Grid2D::new(32).unwrap();
        let psi = g.project(|x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let u_star = SpectralVector {
            c: [g.deriv(&psi, 1), g.deriv(&psi, 0).scale(-1.0)],
        };
        let rho = g.project(|x, y| 1.0 + 0.5 * (2.0 * PI * (x + y)).cos());
        let c0 = 0.2 / 1.5;
        let rho_nodal = g.inverse(&rho);
        let grad = g.velocity_gradient(&u_star);
        let visc = scaled_strain(&grad, &rho_nodal, c0);
        let h = g
            .laplacian_vector(&u_star)
            .scale(-1.0)
            .sub(&g.tensor_divergence(&visc));
        let sol = g
            .variable_viscosity_stokes(&rho, c0, &h, None, 1e-13, 30)
            .unwrap();
        assert!(sol.iterations <= 30);
        assert!(g.h1_seminorm_vector(&sol.u.sub(&u_star)) < 1e-11);
        for w in sol.history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    proptest! {
        #[test]
        fn leray_output_is_divergence_free(seed in 0u64..500) {
            let g = Grid2D::new(16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = SpectralVector { c: [random_smooth(&g, &mut rng, 4), random_smooth(&g, &mut rng, 4)] };
            let pu = g.leray_project(&u);
            prop_assert!(g.l2_norm(&g.divergence(&pu)) < 1e-12);
            let ppu = g.leray_project(&pu);
            prop_assert!(g.l2_norm_vector(&ppu.sub(&pu)) < 1e-13);
            let su = g.stokes_solve(&u);
            prop_assert!(g.l2_norm(&g.divergence(&su)) < 1e-12);
            prop_assert!(su.c[0].data[0].norm() < 1e-15 && su.c[1].data[0].norm() < 1e-15);
        }
    }
}
