//! Finite trigonometric sums with exact derivatives of any order.
//!
//! A scalar field is a sum of `amp * cos(k . x + phase)`. Used for forcing
//! presets, manufactured solutions and pointwise oracles.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::spectral::{Grid2D, SpectralScalar, SpectralVector};

/// One term `amp * cos(k . x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub amp: f64,
    pub k: [f64; 3],
    pub phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub modes: Vec<TrigMode>,
}

/// Vector field with one trigonometric sum per component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigVector {
    pub c: [TrigField; 3],
}

impl TrigField {
    pub fn constant(c: f64) -> Self {
        TrigField {
            modes: vec![TrigMode {
                amp: c,
                k: [0.0; 3],
                phase: 0.0,
            }],
        }
    }

    /// `amp * cos(2 pi (n . x) + phase)` for an integer wavevector n.
    pub fn wave(amp: f64, n: [i64; 3], phase: f64) -> Self {
        let k = [
            2.0 * PI * n[0] as f64,
            2.0 * PI * n[1] as f64,
            2.0 * PI * n[2] as f64,
        ];
        TrigField {
            modes: vec![TrigMode { amp, k, phase }],
        }
    }

    pub fn add(&self, o: &TrigField) -> Self {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&o.modes);
        TrigField { modes }
    }

    pub fn scale(&self, s: f64) -> Self {
        TrigField {
            modes: self
                .modes
                .iter()
                .map(|m| TrigMode {
                    amp: m.amp * s,
                    ..*m
                })
                .collect(),
        }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        self.deriv_eval(x, &[])
    }

    /// Mixed partial derivative along the listed axes, evaluated at x.
    pub fn deriv_eval(&self, x: &Vector3<f64>, axes: &[usize]) -> f64 {
        let shift = axes.len() as f64 * FRAC_PI_2;
        self.modes
            .iter()
            .map(|m| {
                let f: f64 = axes.iter().map(|&a| m.k[a]).product();
                let arg = m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2] + m.phase + shift;
                m.amp * f * arg.cos()
            })
            .sum()
    }

    /// Derivative field along one axis.
    pub fn deriv(&self, axis: usize) -> Self {
        TrigField {
            modes: self
                .modes
                .iter()
                .map(|m| TrigMode {
                    amp: m.amp * m.k[axis],
                    k: m.k,
                    phase: m.phase + FRAC_PI_2,
                })
                .collect(),
        }
    }

    pub fn laplacian(&self) -> Self {
        TrigField {
            modes: self
                .modes
                .iter()
                .map(|m| TrigMode {
                    amp: -m.amp * (m.k[0] * m.k[0] + m.k[1] * m.k[1] + m.k[2] * m.k[2]),
                    ..*m
                })
                .collect(),
        }
    }

    pub fn gradient_at(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.deriv_eval(x, &[0]),
            self.deriv_eval(x, &[1]),
            self.deriv_eval(x, &[2]),
        )
    }

    pub fn hessian_at(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.deriv_eval(x, &[i, j]))
    }

    /// Samples the field on a 2D grid (x3 = 0) and transforms.
    pub fn to_spectral(&self, grid: &Grid2D) -> SpectralScalar {
        grid.project(|x, y| self.eval(&Vector3::new(x, y, 0.0)))
    }

    /// Random sum of `count` waves with integer wavevectors, |n_i| <= kmax, in
    /// the first `dim` directions; the zero wavevector is excluded.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, count: usize, kmax: i64, amp: f64) -> Self {
        let mut f = TrigField::default();
        for _ in 0..count {
            let n = random_wavevector(rng, dim, kmax);
            let a = amp * rng.gen_range(-1.0..1.0);
            let ph = rng.gen_range(0.0..2.0 * PI);
            f = f.add(&TrigField::wave(a, n, ph));
        }
        f
    }
}

impl TrigVector {
    pub fn add(&self, o: &TrigVector) -> Self {
        TrigVector {
            c: [
                self.c[0].add(&o.c[0]),
                self.c[1].add(&o.c[1]),
                self.c[2].add(&o.c[2]),
            ],
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        TrigVector {
            c: [self.c[0].scale(s), self.c[1].scale(s), self.c[2].scale(s)],
        }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.c[0].eval(x), self.c[1].eval(x), self.c[2].eval(x))
    }

    /// (grad u)_{ij} = d_j u_i at x.
    pub fn gradient_at(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.c[i].deriv_eval(x, &[j]))
    }

    /// d_k (grad u)_{ij} at x, indexed by k.
    pub fn second_gradient_at(&self, x: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        [0, 1, 2].map(|k| Matrix3::from_fn(|i, j| self.c[i].deriv_eval(x, &[j, k])))
    }

    /// Laplacian of the velocity gradient at x.
    pub fn laplacian_gradient_at(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| (0..3).map(|k| self.c[i].deriv_eval(x, &[j, k, k])).sum())
    }

    pub fn divergence_at(&self, x: &Vector3<f64>) -> f64 {
        (0..3).map(|i| self.c[i].deriv_eval(x, &[i])).sum()
    }

    /// Stream-function field u = (d2 psi, -d1 psi) in the plane.
    pub fn from_stream(psi: &TrigField) -> Self {
        TrigVector {
            c: [psi.deriv(1), psi.deriv(0).scale(-1.0), TrigField::default()],
        }
    }

    /// Random divergence-free field in dimension 2 or 3.
    pub fn random_divergence_free<R: Rng>(
        rng: &mut R,
        dim: usize,
        count: usize,
        kmax: i64,
        amp: f64,
    ) -> Self {
        let mut u = TrigVector::default();
        for _ in 0..count {
            let n = random_wavevector(rng, dim, kmax);
            let k = Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64);
            let mut a = Vector3::zeros();
            for i in 0..dim {
                a[i] = rng.gen_range(-1.0..1.0);
            }
            a -= k * (a.dot(&k) / k.norm_squared());
            a *= amp;
            let ph = rng.gen_range(0.0..2.0 * PI);
            for i in 0..3 {
                if a[i] != 0.0 {
                    u.c[i] = u.c[i].add(&TrigField::wave(a[i], n, ph));
                }
            }
        }
        u
    }

    pub fn to_spectral(&self, grid: &Grid2D) -> SpectralVector {
        SpectralVector {
            c: [self.c[0].to_spectral(grid), self.c[1].to_spectral(grid)],
        }
    }
}

fn random_wavevector<R: Rng>(rng: &mut R, dim: usize, kmax: i64) -> [i64; 3] {
    loop {
        let mut n = [0i64; 3];
        for v in n.iter_mut().take(dim) {
            *v = rng.gen_range(-kmax..=kmax);
        }
        if n.iter().any(|&v| v != 0) {
            return n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = TrigField::random(&mut rng, 3, 4, 2, 1.0);
        let x = Vector3::new(0.3, 0.1, 0.7);
        let h = 1e-5;
        for a in 0..3 {
            let mut e = Vector3::zeros();
            e[a] = h;
            let fd = (f.eval(&(x + e)) - f.eval(&(x - e))) / (2.0 * h);
            assert!((fd - f.deriv_eval(&x, &[a])).abs() < 1e-6);
            assert!((f.deriv(a).eval(&x) - f.deriv_eval(&x, &[a])).abs() < 1e-12);
        }
        let lap: f64 = (0..3).map(|a| f.deriv_eval(&x, &[a, a])).sum();
        assert!((lap - f.laplacian().eval(&x)).abs() < 1e-9);
    }

    #[test]
    fn random_fields_are_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for dim in [2, 3] {
            let u = TrigVector::random_divergence_free(&mut rng, dim, 5, 2, 1.0);
            let x = Vector3::new(0.2, 0.9, 0.4);
            assert!(u.divergence_at(&x).abs() < 1e-12);
            assert!(u.gradient_at(&x).trace().abs() < 1e-12);
        }
        let psi = TrigField::random(&mut rng, 2, 3, 2, 1.0);
        let u = TrigVector::from_stream(&psi);
        assert!(u.divergence_at(&Vector3::new(0.4, 0.6, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn spectral_sampling_is_exact() {
        let grid = Grid2D::new(16).unwrap();
        let f = TrigField::wave(0.5, [1, -2, 0], 0.3);
        let s = f.to_spectral(&grid);
        let d = grid.inverse(&grid.deriv(&s, 1));
        for p in 0..grid.len() {
            let (x, y) = grid.point(p);
            assert!((d[p] - f.deriv_eval(&Vector3::new(x, y, 0.0), &[1])).abs() < 1e-11);
        }
    }
}
