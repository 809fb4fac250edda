//! Exponential time differencing for y' = L y + N(y, t) with diagonal real L.
//!
//! The stiff linear part (angular and spatial diffusion, viscosity) is
//! integrated exactly; N is treated by exponential Runge-Kutta stages.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DssError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exponential Euler, order 1.
    Etd1,
    /// Cox-Matthews ETD2RK, order 2.
    Etd2,
    /// Cox-Matthews ETDRK4, order 4.
    Etd4,
}

impl Scheme {
    pub fn order(self) -> usize {
        match self {
            Scheme::Etd1 => 1,
            Scheme::Etd2 => 2,
            Scheme::Etd4 => 4,
        }
    }

    pub fn from_order(p: usize) -> Result<Self> {
        match p {
            1 => Ok(Scheme::Etd1),
            2 => Ok(Scheme::Etd2),
            4 => Ok(Scheme::Etd4),
            _ => Err(DssError::InvalidParams(format!(
                "scheme order must be 1, 2 or 4, got {p}"
            ))),
        }
    }
}

/// phi_k(z) = sum_j z^j / (j + k)!, with phi_0 = exp.
pub fn phi(k: usize, z: f64) -> f64 {
    if z.abs() < 1.0 {
        let mut fact: f64 = (1..=k).map(|i| i as f64).product();
        let mut term = 1.0 / fact;
        let mut sum = term;
        for j in 1..30 {
            fact = (j + k) as f64;
            term *= z / fact;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut p = z.exp();
        let mut fact = 1.0;
        for j in 1..=k {
            p = (p - 1.0 / fact) / z;
            fact *= j as f64;
        }
        p
    }
}

/// Precomputed exponential weights for one step size.
#[derive(Debug, Clone)]
pub struct EtdWeights {
    pub scheme: Scheme,
    pub h: f64,
    e: Vec<f64>,
    e2: Vec<f64>,
    p1: Vec<f64>,
    p1h: Vec<f64>,
    p2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdWeights {
    pub fn new(scheme: Scheme, lin: &[f64], h: f64) -> Self {
        let map = |f: &dyn Fn(f64) -> f64| lin.iter().map(|&l| f(l * h)).collect::<Vec<f64>>();
        let empty = Vec::new();
        let (e2, p1h, f1, f2, f3) = if scheme == Scheme::Etd4 {
            (
                map(&|z| (0.5 * z).exp()),
                map(&|z| 0.5 * h * phi(1, 0.5 * z)),
                map(&|z| h * (phi(1, z) - 3.0 * phi(2, z) + 4.0 * phi(3, z))),
                map(&|z| h * (phi(2, z) - 2.0 * phi(3, z))),
                map(&|z| h * (4.0 * phi(3, z) - phi(2, z))),
            )
        } else {
            (
                empty.clone(),
                empty.clone(),
                empty.clone(),
                empty.clone(),
                empty.clone(),
            )
        };
        EtdWeights {
            scheme,
            h,
            e: map(&|z| z.exp()),
            e2,
            p1: map(&|z| h * phi(1, z)),
            p1h,
            p2: map(&|z| h * phi(2, z)),
            f1,
            f2,
            f3,
        }
    }

    /// Advances y from t to t + h.
    pub fn step<N>(&self, y: &[Complex64], t: f64, mut nonlin: N) -> Result<Vec<Complex64>>
    where
        N: FnMut(&[Complex64], f64) -> Result<Vec<Complex64>>,
    {
        let h = self.h;
        let nu = nonlin(y, t)?;
        match self.scheme {
            Scheme::Etd1 => Ok((0..y.len())
                .map(|i| y[i] * self.e[i] + nu[i] * self.p1[i])
                .collect()),
            Scheme::Etd2 => {
                let a: Vec<Complex64> = (0..y.len())
                    .map(|i| y[i] * self.e[i] + nu[i] * self.p1[i])
                    .collect();
                let na = nonlin(&a, t + h)?;
                Ok((0..y.len())
                    .map(|i| a[i] + (na[i] - nu[i]) * self.p2[i])
                    .collect())
            }
            Scheme::Etd4 => {
                let eu: Vec<Complex64> = (0..y.len()).map(|i| y[i] * self.e2[i]).collect();
                let a: Vec<Complex64> = (0..y.len()).map(|i| eu[i] + nu[i] * self.p1h[i]).collect();
                let na = nonlin(&a, t + 0.5 * h)?;
                let b: Vec<Complex64> = (0..y.len()).map(|i| eu[i] + na[i] * self.p1h[i]).collect();
                let nb = nonlin(&b, t + 0.5 * h)?;
                let c: Vec<Complex64> = (0..y.len())
                    .map(|i| a[i] * self.e2[i] + (nb[i] * 2.0 - nu[i]) * self.p1h[i])
                    .collect();
                let nc = nonlin(&c, t + h)?;
                Ok((0..y.len())
                    .map(|i| {
                        y[i] * self.e[i]
                            + nu[i] * self.f1[i]
                            + (na[i] + nb[i]) * (2.0 * self.f2[i])
                            + nc[i] * self.f3[i]
                    })
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_are_continuous_across_branches() {
        for k in 0..4 {
            for z in [-0.999_999_9_f64, -1.000_000_1, 0.999_999_9, 1.000_000_1] {
                let a = phi(k, z);
                let b = phi(k, z * (1.0 + 1e-12));
                assert!((a - b).abs() < 1e-9, "k {k} z {z}");
            }
        }
        assert!((phi(1, 0.0) - 1.0).abs() < 1e-16);
        assert!((phi(2, 0.0) - 0.5).abs() < 1e-16);
        assert!((phi(3, 0.0) - 1.0 / 6.0).abs() < 1e-16);
        let z: f64 = -3.0;
        assert!((phi(1, z) - (z.exp() - 1.0) / z).abs() < 1e-15);
        assert!((phi(2, z) - (z.exp() - 1.0 - z) / (z * z)).abs() < 1e-15);
    }

    fn order_of(scheme: Scheme) -> f64 {
        // y' = -50 y + sin(y) + cos t, reference by a fine run
        let lin = [-50.0];
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let w = EtdWeights::new(scheme, &lin, h);
            let mut y = vec![Complex64::new(0.3, 0.0)];
            for s in 0..n {
                let t = s as f64 * h;
                y = w
                    .step(&y, t, |v, t| {
                        Ok(vec![Complex64::new(v[0].re.sin() + t.cos(), 0.0)])
                    })
                    .unwrap();
            }
            y[0].re
        };
        let reference = run(1 << 14);
        let e1 = (run(64) - reference).abs();
        let e2 = (run(128) - reference).abs();
        (e1 / e2).log2()
    }

    #[test]
    fn observed_orders() {
        assert!((order_of(Scheme::Etd1) - 1.0).abs() < 0.2);
        assert!((order_of(Scheme::Etd2) - 2.0).abs() < 0.2);
        assert!(order_of(Scheme::Etd4) > 3.7);
    }

    #[test]
    fn linear_part_is_exact() {
        let lin = [-7.0, 0.0, -0.1];
        let w = EtdWeights::new(Scheme::Etd2, &lin, 0.3);
        let y = vec![Complex64::new(1.0, 2.0); 3];
        let out = w
            .step(&y, 0.0, |v, _| Ok(vec![Complex64::new(0.0, 0.0); v.len()]))
            .unwrap();
        for i in 0..3 {
            assert!((out[i] - y[i] * (lin[i] * 0.3).exp()).norm() < 1e-15);
        }
        assert!(Scheme::from_order(3).is_err());
    }
}
