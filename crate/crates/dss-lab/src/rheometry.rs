//! Homogeneous angular solves under imposed velocity gradients, measured
//! viscometric functions and their comparison with the ordered-fluid laws.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularBasis, AngularFunction};
use crate::closure::{deviatoric, sigma1, sigma2};
use crate::error::{DssError, Result};
use crate::etd::{EtdWeights, Scheme};
use crate::params::{omega, second_order_coeffs, third_order_coeffs, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// u = kappa x2 e1.
    SimpleShear,
    /// Planar kappa (x1 e1 - x2 e2) in d = 2, uniaxial
    /// kappa (x1 e1 - (x2 e2 + x3 e3) / 2) in d = 3.
    Elongation,
    /// u = kappa sin(t) x2 e1.
    OscillatoryShear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImposedFlow {
    pub kind: FlowKind,
    pub rate: f64,
    pub dim: usize,
}

impl ImposedFlow {
    pub fn new(kind: FlowKind, rate: f64, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(DssError::InvalidParams(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if !rate.is_finite() {
            return Err(DssError::InvalidParams("flow rate must be finite".into()));
        }
        Ok(ImposedFlow { kind, rate, dim })
    }

    /// Velocity gradient (grad u)_ij = d_j u_i at time t.
    pub fn grad_u(&self, t: f64) -> Matrix3<f64> {
        let k = self.rate;
        let mut g = Matrix3::zeros();
        match self.kind {
            FlowKind::SimpleShear => g[(0, 1)] = k,
            FlowKind::OscillatoryShear => g[(0, 1)] = k * t.sin(),
            FlowKind::Elongation => {
                g[(0, 0)] = k;
                if self.dim == 2 {
                    g[(1, 1)] = -k;
                } else {
                    g[(1, 1)] = -0.5 * k;
                    g[(2, 2)] = -0.5 * k;
                }
            }
        }
        g
    }
}

/// Viscometric functions extracted from a total stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredViscometrics {
    pub dim: usize,
    pub eps: f64,
    pub kappa: f64,
    /// Deviatoric total stress.
    pub stress: [[f64; 3]; 3],
    /// Trace of the total stress, excluded from every viscometric function.
    pub trace: f64,
    /// sigma_12 / kappa (shear flows).
    pub eta: Option<f64>,
    /// sigma_11 - sigma_22 (shear flows).
    pub n1: Option<f64>,
    /// sigma_22 - sigma_33 (shear flows, d = 3).
    pub n2: Option<f64>,
    pub nu10: Option<f64>,
    pub nu20: Option<f64>,
    /// Elongational viscosity (elongational flows).
    pub eta_e: Option<f64>,
    /// Phase of sigma_12 relative to sin t (oscillatory shear).
    pub phase: Option<f64>,
    pub amplitude: Option<f64>,
}

/// Total stress 2D(u) + sigma1[f] / eps + sigma2[f, grad u].
pub fn total_stress(
    basis: &AngularBasis,
    m: &ModelParams,
    f: &AngularFunction,
    grad: &Matrix3<f64>,
) -> Matrix3<f64> {
    grad + grad.transpose() + sigma1(basis, m, f) / m.eps + sigma2(basis, m, f, grad)
}

/// Steady solution of (1/eps) Laplace_n f = div_n(pi^perp (grad u) n f) with
/// unit mass, by a dense solve whose first row is the mass constraint.
pub fn angular_steady_state(
    flow: &ImposedFlow,
    m: &ModelParams,
    basis: &AngularBasis,
) -> Result<AngularFunction> {
    check_setup(flow, m, basis)?;
    if flow.kind == FlowKind::OscillatoryShear {
        return Err(DssError::InvalidParams(
            "oscillatory shear has no steady state; use oscillatory_response".into(),
        ));
    }
    let g = flow.grad_u(0.0);
    let rot = basis.rotation_operator(&g)?;
    let nc = basis.n_coeffs();
    let mut a = -rot;
    for (i, &l) in basis.harmonic_degree().iter().enumerate() {
        a[(i, i)] += basis.eigenvalue(l) / m.eps;
    }
    // The constant mode is the null direction of the diffusion; index 0 is
    // the l = 0 coefficient in both bases.
    for j in 0..nc {
        a[(0, j)] = 0.0;
    }
    a[(0, 0)] = omega(m.dim).sqrt();
    let mut b = DVector::zeros(nc);
    b[0] = 1.0;
    let sv = a.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(DssError::Singular(format!(
            "angular system condition estimate {cond:.3e}"
        )));
    }
    let coeffs = a
        .lu()
        .solve(&b)
        .ok_or_else(|| DssError::Singular("angular system is singular".into()))?;
    Ok(AngularFunction { coeffs })
}

fn check_setup(flow: &ImposedFlow, m: &ModelParams, basis: &AngularBasis) -> Result<()> {
    m.validate()?;
    if flow.dim != m.dim || basis.dim() != m.dim {
        return Err(DssError::InvalidParams(
            "flow, parameters and basis must share the dimension".into(),
        ));
    }
    Ok(())
}

fn to_array(s: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = s[(i, j)];
        }
    }
    a
}

/// Viscometric functions of a steady angular state.
pub fn measure(
    basis: &AngularBasis,
    f: &AngularFunction,
    flow: &ImposedFlow,
    m: &ModelParams,
) -> Result<MeasuredViscometrics> {
    check_setup(flow, m, basis)?;
    if flow.kind == FlowKind::OscillatoryShear {
        return Err(DssError::InvalidParams(
            "oscillatory shear is measured by oscillatory_response".into(),
        ));
    }
    let s = total_stress(basis, m, f, &flow.grad_u(0.0));
    Ok(viscometrics_from_stress(&s, flow, m))
}

fn viscometrics_from_stress(
    s: &Matrix3<f64>,
    flow: &ImposedFlow,
    m: &ModelParams,
) -> MeasuredViscometrics {
    let d = m.dim;
    let dev = deviatoric(s, d);
    let k = flow.rate;
    let mut out = MeasuredViscometrics {
        dim: d,
        eps: m.eps,
        kappa: k,
        stress: to_array(&dev),
        trace: (0..d).map(|i| s[(i, i)]).sum(),
        eta: None,
        n1: None,
        n2: None,
        nu10: None,
        nu20: None,
        eta_e: None,
        phase: None,
        amplitude: None,
    };
    match flow.kind {
        FlowKind::SimpleShear => {
            let n1 = dev[(0, 0)] - dev[(1, 1)];
            out.n1 = Some(n1);
            if k != 0.0 {
                out.eta = Some(dev[(0, 1)] / k);
                out.nu10 = Some(n1 / (k * k));
            }
            if d == 3 {
                let n2 = dev[(1, 1)] - dev[(2, 2)];
                out.n2 = Some(n2);
                if k != 0.0 {
                    out.nu20 = Some(n2 / (k * k));
                }
            }
        }
        FlowKind::Elongation => {
            if k != 0.0 {
                let num = if d == 3 {
                    dev[(0, 0)] - 0.5 * (dev[(1, 1)] + dev[(2, 2)])
                } else {
                    dev[(0, 0)] - dev[(1, 1)]
                };
                out.eta_e = Some(num / k);
            }
        }
        FlowKind::OscillatoryShear => {}
    }
    out
}

/// Least-squares fit of y = a sin(t + phi); returns (a, phi, residual / a).
pub fn fit_sinusoid(t: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(DssError::Fit(
            "sinusoid fit needs at least three samples".into(),
        ));
    }
    let a = DMatrix::from_fn(
        t.len(),
        2,
        |i, j| if j == 0 { t[i].sin() } else { t[i].cos() },
    );
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| DssError::Fit(e.to_string()))?;
    let amp = c[0].hypot(c[1]);
    if amp == 0.0 {
        return Err(DssError::Fit("zero amplitude".into()));
    }
    let phase = c[1].atan2(c[0]);
    let r = (&a * &c - &b).norm() / (t.len() as f64).sqrt();
    Ok((amp, phase, r / amp))
}

/// Time-resolved oscillatory shear from the uniform state: integrates the
/// angular equation by ETDRK4, discards 5 eps, then fits sigma_12 over the
/// last full period after the discard.
pub fn oscillatory_response(
    flow: &ImposedFlow,
    m: &ModelParams,
    basis: &AngularBasis,
    dt: f64,
) -> Result<MeasuredViscometrics> {
    check_setup(flow, m, basis)?;
    if flow.kind != FlowKind::OscillatoryShear {
        return Err(DssError::InvalidParams(
            "oscillatory_response needs an oscillatory shear flow".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(DssError::InvalidParams("dt must be positive".into()));
    }
    let unit = ImposedFlow {
        kind: FlowKind::SimpleShear,
        rate: flow.rate,
        dim: flow.dim,
    };
    let rot = basis.rotation_operator(&unit.grad_u(0.0))?;
    let lin: Vec<f64> = basis
        .harmonic_degree()
        .iter()
        .map(|&l| basis.eigenvalue(l) / m.eps)
        .collect();
    let period = 2.0 * PI;
    let t_end = 5.0 * m.eps + period;
    let steps = (t_end / dt).ceil() as usize;
    let h = t_end / steps as f64;
    let w = EtdWeights::new(Scheme::Etd4, &lin, h);
    let mut y: Vec<Complex64> = basis
        .constant(1.0 / omega(m.dim))
        .coeffs
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let nonlin = |v: &[Complex64], t: f64| -> Result<Vec<Complex64>> {
        let re = DVector::from_iterator(v.len(), v.iter().map(|c| c.re));
        let r = &rot * re * (-t.sin());
        Ok(r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    };
    let mut times = Vec::new();
    let mut s12 = Vec::new();
    let mut last = Matrix3::zeros();
    for i in 0..steps {
        let t = i as f64 * h;
        y = w.step(&y, t, nonlin)?;
        let t1 = (i + 1) as f64 * h;
        if t1 >= t_end - period - 1e-12 {
            let f = AngularFunction {
                coeffs: DVector::from_iterator(y.len(), y.iter().map(|c| c.re)),
            };
            let s = total_stress(basis, m, &f, &flow.grad_u(t1));
            times.push(t1);
            s12.push(s[(0, 1)]);
            last = s;
        }
    }
    let (amp, phase, res) = fit_sinusoid(&times, &s12)?;
    if res > 0.05 {
        return Err(DssError::Fit(format!(
            "sinusoid residual {res:.3e} exceeds 5% of the amplitude"
        )));
    }
    let mut out = viscometrics_from_stress(&last, flow, m);
    out.phase = Some(phase);
    out.amplitude = Some(amp);
    Ok(out)
}

/// Solves for one (flow, eps) point.
pub fn measure_flow(
    flow: &ImposedFlow,
    m: &ModelParams,
    basis: &AngularBasis,
    dt: f64,
) -> Result<MeasuredViscometrics> {
    match flow.kind {
        FlowKind::OscillatoryShear => oscillatory_response(flow, m, basis, dt),
        _ => measure(basis, &angular_steady_state(flow, m, basis)?, flow, m),
    }
}

/// Least-squares polynomial fit; returns coefficients (constant first) and
/// their standard errors (zero when there are no residual degrees of freedom).
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let p = degree + 1;
    if n != y.len() || n < p {
        return Err(DssError::Fit(format!(
            "{n} points cannot determine a degree-{degree} polynomial"
        )));
    }
    let a = DMatrix::from_fn(n, p, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let ata = a.tr_mul(&a);
    let sv = ata.clone().singular_values();
    if sv.min() <= 1e-14 * sv.max() {
        return Err(DssError::Fit(format!(
            "normal equations condition {:.3e}",
            sv.max() / sv.min()
        )));
    }
    let inv = ata
        .try_inverse()
        .ok_or_else(|| DssError::Fit("normal equations are singular".into()))?;
    let c = &inv * a.tr_mul(&b);
    let r = &a * &c - &b;
    let dof = n - p;
    let s2 = if dof > 0 {
        r.norm_squared() / dof as f64
    } else {
        0.0
    };
    let se = (0..p).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    Ok((c.iter().cloned().collect(), se))
}

/// A measured quantity fitted as a polynomial in eps against its prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrapolatedQuantity {
    pub name: String,
    pub values: Vec<f64>,
    /// Extrapolated small-eps coefficient.
    pub leading: f64,
    pub std_error: f64,
    pub predicted: f64,
    /// |leading - predicted| / |predicted|, or the absolute error when the
    /// prediction vanishes.
    pub rel_err: f64,
}

fn quantity(
    name: &str,
    eps: &[f64],
    values: Vec<f64>,
    power: i32,
    index: usize,
    degree: usize,
    predicted: f64,
) -> Result<ExtrapolatedQuantity> {
    let y: Vec<f64> = values
        .iter()
        .zip(eps)
        .map(|(v, e)| v / e.powi(power))
        .collect();
    let (c, se) = poly_fit(eps, &y, degree)?;
    let rel_err = if predicted != 0.0 {
        (c[index] - predicted).abs() / predicted.abs()
    } else {
        c[index].abs()
    };
    Ok(ExtrapolatedQuantity {
        name: name.into(),
        values,
        leading: c[index],
        std_error: se[index],
        predicted,
        rel_err,
    })
}

/// Sweep of one flow over eps with the extrapolated comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepComparison {
    pub flow: ImposedFlow,
    pub params: ModelParams,
    pub eps: Vec<f64>,
    pub measurements: Vec<MeasuredViscometrics>,
    pub quantities: Vec<ExtrapolatedQuantity>,
}

/// Measures the flow at every eps (strictly decreasing, at least four values)
/// and extrapolates: eta to the zero-shear viscosity, nu10 / eps and
/// nu20 / eps to -2 gamma1 and 2 gamma1 + gamma2, eta_E to its intercept and
/// rate slope, and phase / eps to gamma1 / eta0 (homogeneous coefficients).
pub fn epsilon_sweep_extrapolate(
    flow: &ImposedFlow,
    m: &ModelParams,
    basis: &AngularBasis,
    eps: &[f64],
    dt: f64,
) -> Result<SweepComparison> {
    if eps.len() < 4 {
        return Err(DssError::InvalidParams(
            "an eps sweep needs at least four values".into(),
        ));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(DssError::InvalidParams(
            "eps list must be positive and strictly decreasing".into(),
        ));
    }
    let measurements: Vec<MeasuredViscometrics> = eps
        .par_iter()
        .map(|&e| {
            measure_flow(flow, &m.with_eps(e), basis, dt).map_err(|err| DssError::AtEpsilon {
                eps: e,
                source: Box::new(err),
            })
        })
        .collect::<Result<_>>()?;
    let c = second_order_coeffs(m).to_homogeneous();
    let eta0 = c.zero_shear_viscosity();
    let deg = 2;
    let col = |f: &dyn Fn(&MeasuredViscometrics) -> Option<f64>| -> Result<Vec<f64>> {
        measurements
            .iter()
            .map(|v| f(v).ok_or_else(|| DssError::Fit("quantity missing for this flow".into())))
            .collect()
    };
    let mut quantities = Vec::new();
    match flow.kind {
        FlowKind::SimpleShear => {
            if flow.rate != 0.0 {
                quantities.push(quantity("eta", eps, col(&|v| v.eta)?, 0, 0, deg, eta0)?);
                quantities.push(quantity(
                    "nu10/eps",
                    eps,
                    col(&|v| v.nu10)?,
                    1,
                    0,
                    deg,
                    -2.0 * c.gamma1,
                )?);
                if m.dim == 3 {
                    quantities.push(quantity(
                        "nu20/eps",
                        eps,
                        col(&|v| v.nu20)?,
                        1,
                        0,
                        deg,
                        2.0 * c.gamma1 + c.gamma2,
                    )?);
                }
            }
        }
        FlowKind::Elongation => {
            if flow.rate != 0.0 {
                let (int, slope) = if m.dim == 3 {
                    (3.0 * eta0, 3.0 * (c.gamma1 + c.gamma2))
                } else {
                    (4.0 * eta0, 0.0)
                };
                let ee = col(&|v| v.eta_e)?;
                quantities.push(quantity("eta_E", eps, ee.clone(), 0, 0, deg, int)?);
                let per_rate: Vec<f64> = ee.iter().map(|v| v / flow.rate).collect();
                quantities.push(quantity("eta_E slope", eps, per_rate, 0, 1, deg, slope)?);
            }
        }
        FlowKind::OscillatoryShear => {
            quantities.push(quantity(
                "phase/eps",
                eps,
                col(&|v| v.phase)?,
                1,
                0,
                deg,
                c.gamma1 / eta0,
            )?);
        }
    }
    Ok(SweepComparison {
        flow: *flow,
        params: *m,
        eps: eps.to_vec(),
        measurements,
        quantities,
    })
}

/// Shear-thinning curvature (eta(kappa, eps) - eta(0, eps)) / (eps kappa)^2 at
/// each eps and its Richardson extrapolation in eps^2 from the two smallest
/// values, against 2 (kappa2 + kappa3).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureCheck {
    pub eps: Vec<f64>,
    pub curvature: Vec<f64>,
    pub extrapolated: f64,
    pub predicted: f64,
    pub rel_err: f64,
}

pub fn shear_curvature(
    m: &ModelParams,
    basis: &AngularBasis,
    kappa: f64,
    eps: &[f64],
) -> Result<CurvatureCheck> {
    if eps.len() < 2 || kappa == 0.0 {
        return Err(DssError::InvalidParams(
            "curvature needs two eps values and a nonzero rate".into(),
        ));
    }
    let t = third_order_coeffs(m)
        .third
        .ok_or_else(|| DssError::InvalidParams("third-order coefficients unavailable".into()))?;
    let curvature: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let p = m.with_eps(e);
            let flow = ImposedFlow::new(FlowKind::SimpleShear, kappa, m.dim)?;
            let at = |f: &ImposedFlow| -> Result<f64> {
                let s = measure(basis, &angular_steady_state(f, &p, basis)?, f, &p)?;
                Ok(s.stress[0][1])
            };
            // eta(0) is the zero-rate limit of sigma_12 / kappa, i.e. the linear response
            let tiny = ImposedFlow {
                rate: 1e-4 * kappa,
                ..flow
            };
            let eta_k = at(&flow)? / kappa;
            let eta_0 = at(&tiny)? / tiny.rate;
            Ok((eta_k - eta_0) / (e * e * kappa * kappa))
        })
        .collect::<Result<_>>()?;
    let n = eps.len();
    let (e1, e2) = (eps[n - 2], eps[n - 1]);
    let r = (e1 / e2).powi(2);
    let extrapolated = (r * curvature[n - 1] - curvature[n - 2]) / (r - 1.0);
    let predicted = 2.0 * (t.kappa2 + t.kappa3);
    Ok(CurvatureCheck {
        eps: eps.to_vec(),
        curvature,
        extrapolated,
        predicted,
        rel_err: (extrapolated - predicted).abs() / predicted.abs(),
    })
}

#[derive(Debug, Serialize)]
struct CsvRow {
    d: usize,
    theta: f64,
    lambda: f64,
    u0: f64,
    eps: f64,
    kappa: f64,
    eta: Option<f64>,
    n1: Option<f64>,
    n2: Option<f64>,
    eta_e: Option<f64>,
    phase: Option<f64>,
    predicted_eta: f64,
    predicted_n1: f64,
    predicted_n2: Option<f64>,
    predicted_eta_e: f64,
    predicted_phase: f64,
    rel_err_eta: Option<f64>,
    rel_err_n1: Option<f64>,
    rel_err_n2: Option<f64>,
    rel_err_eta_e: Option<f64>,
    rel_err_phase: Option<f64>,
}

fn rel(measured: Option<f64>, predicted: f64) -> Option<f64> {
    measured.map(|v| {
        if predicted != 0.0 {
            (v - predicted).abs() / predicted.abs()
        } else {
            v.abs()
        }
    })
}

/// Writes one CSV row per measurement with the second-order predictions.
pub fn write_csv(path: &Path, sweeps: &[SweepComparison]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in sweeps {
        let c = second_order_coeffs(&s.params).to_homogeneous();
        let eta0 = c.zero_shear_viscosity();
        for v in &s.measurements {
            let (a1, a2) = (v.eps * c.gamma1, v.eps * c.gamma2);
            let k2 = v.kappa * v.kappa;
            let p_n2 = (v.dim == 3).then_some((2.0 * a1 + a2) * k2);
            let p_ee = if v.dim == 3 {
                3.0 * eta0 + 3.0 * (a1 + a2) * v.kappa
            } else {
                4.0 * eta0
            };
            let p_phase = (a1 / eta0).atan();
            w.serialize(CsvRow {
                d: v.dim,
                theta: s.params.theta,
                lambda: s.params.lambda,
                u0: s.params.u0_swim,
                eps: v.eps,
                kappa: v.kappa,
                eta: v.eta,
                n1: v.n1,
                n2: v.n2,
                eta_e: v.eta_e,
                phase: v.phase,
                predicted_eta: eta0,
                predicted_n1: -2.0 * a1 * k2,
                predicted_n2: p_n2,
                predicted_eta_e: p_ee,
                predicted_phase: p_phase,
                rel_err_eta: rel(v.eta, eta0),
                rel_err_n1: rel(v.n1, -2.0 * a1 * k2),
                rel_err_n2: p_n2.and_then(|p| rel(v.n2, p)),
                rel_err_eta_e: rel(v.eta_e, p_ee),
                rel_err_phase: rel(v.phase, p_phase),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
