//! Dimensionless parameters, non-dimensionalization, ordered-fluid
//! coefficients and closed-form viscometric predictions.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{DssError, Result};

/// Surface measure of the unit sphere S^{d-1}.
pub fn omega(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Translational Peclet number; `Infinite` switches off spatial diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Peclet {
    Finite(f64),
    Infinite,
}

impl Peclet {
    /// Spatial diffusion coefficient 1/Pe.
    pub fn inverse(self) -> f64 {
        match self {
            Peclet::Finite(p) => 1.0 / p,
            Peclet::Infinite => 0.0,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Peclet::Finite(_))
    }

    /// Value as a float, `f64::INFINITY` for the sentinel.
    pub fn value(self) -> f64 {
        match self {
            Peclet::Finite(p) => p,
            Peclet::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Peclet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Peclet::Finite(p) => write!(f, "{p}"),
            Peclet::Infinite => write!(f, "infinity"),
        }
    }
}

impl Serialize for Peclet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Peclet::Finite(p) => s.serialize_f64(*p),
            Peclet::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for Peclet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PecletVisitor;
        impl Visitor<'_> for PecletVisitor {
            type Value = Peclet;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a positive number or the string \"infinity\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Peclet, E> {
                Ok(Peclet::Finite(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Peclet, E> {
                Ok(Peclet::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Peclet, E> {
                Ok(Peclet::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Peclet, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => Ok(Peclet::Infinite),
                    other => Err(E::custom(format!("unknown Peclet sentinel {other:?}"))),
                }
            }
        }
        d.deserialize_any(PecletVisitor)
    }
}

/// Dimensionless numbers of the kinetic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub re: f64,
    pub pe: Peclet,
    pub eps: f64,
    pub lambda: f64,
    pub theta: f64,
    pub u0_swim: f64,
    pub dim: usize,
}

impl ModelParams {
    /// Passive rods: no swimming, theta = 6, Stokes flow, no spatial diffusion.
    pub fn passive(dim: usize, eps: f64, lambda: f64) -> Self {
        ModelParams {
            re: 0.0,
            pe: Peclet::Infinite,
            eps,
            lambda,
            theta: 6.0,
            u0_swim: 0.0,
            dim,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn omega(&self) -> f64 {
        omega(self.dim)
    }

    /// Checks the invariants required everywhere.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(DssError::InvalidParams(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(DssError::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DssError::InvalidParams(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !self.theta.is_finite() || !self.u0_swim.is_finite() {
            return Err(DssError::InvalidParams(
                "theta and u0_swim must be finite".into(),
            ));
        }
        if !(self.re >= 0.0 && self.re.is_finite()) {
            return Err(DssError::InvalidParams(format!(
                "re must be >= 0, got {}",
                self.re
            )));
        }
        if let Peclet::Finite(p) = self.pe {
            if !(p > 0.0 && p.is_finite()) {
                return Err(DssError::InvalidParams(format!(
                    "pe must be positive, got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Additional invariants for spatially coupled solves on the 2D torus.
    pub fn validate_coupled(&self) -> Result<()> {
        self.validate()?;
        if !self.pe.is_finite() {
            return Err(DssError::InvalidParams(
                "spatially coupled solves require a finite Peclet number".into(),
            ));
        }
        if self.dim != 2 {
            return Err(DssError::InvalidParams(
                "spatially coupled solves are implemented for dim = 2 only".into(),
            ));
        }
        Ok(())
    }

    /// Navier-Stokes mode (Re > 0) versus Stokes mode (Re = 0).
    pub fn is_navier_stokes(&self) -> bool {
        self.re > 0.0
    }
}

/// Dimensional inputs, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub dim: usize,
    pub fluid_density: f64,
    pub solvent_viscosity: f64,
    pub thermal_energy: f64,
    pub rod_length: f64,
    pub rod_width: f64,
    pub swim_speed: f64,
    pub dipole_strength: f64,
    pub number_density: f64,
    pub flow_speed: f64,
    pub length_scale: f64,
}

/// Slender-body resistance coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resistances {
    pub zeta_rot: f64,
    pub zeta_tr: f64,
}

impl PhysicalParams {
    pub fn resistances(&self) -> Result<Resistances> {
        self.validate()?;
        let log_aspect = (self.rod_length / self.rod_width).ln();
        let mu = self.solvent_viscosity;
        let l = self.rod_length;
        Ok(Resistances {
            zeta_rot: PI * mu * l.powi(3) / (3.0 * log_aspect),
            zeta_tr: 2.0 * PI * mu * l / log_aspect,
        })
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("fluid_density", self.fluid_density),
            ("solvent_viscosity", self.solvent_viscosity),
            ("thermal_energy", self.thermal_energy),
            ("rod_length", self.rod_length),
            ("rod_width", self.rod_width),
            ("number_density", self.number_density),
            ("flow_speed", self.flow_speed),
            ("length_scale", self.length_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DssError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.rod_length <= self.rod_width {
            return Err(DssError::InvalidParams(format!(
                "rod_length {} must exceed rod_width {}",
                self.rod_length, self.rod_width
            )));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(DssError::InvalidParams(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Maps dimensional inputs to the dimensionless model parameters.
pub fn nondimensionalize(p: &PhysicalParams) -> Result<ModelParams> {
    let z = p.resistances()?;
    let kt = p.thermal_energy;
    let mu = p.solvent_viscosity;
    let model = ModelParams {
        re: p.fluid_density * p.flow_speed * p.length_scale / mu,
        pe: Peclet::Finite(p.flow_speed * p.length_scale * z.zeta_tr / kt),
        eps: p.flow_speed * z.zeta_rot / (kt * p.length_scale),
        lambda: z.zeta_rot * p.number_density / (2.0 * mu),
        theta: 6.0 + 2.0 * p.dipole_strength * p.swim_speed.abs() * p.rod_length.powi(2) * mu / kt,
        u0_swim: p.swim_speed / p.flow_speed,
        dim: p.dim,
    };
    Ok(model)
}

/// Whether coefficients carry the sphere measure (multiplying a density)
/// or are evaluated at the uniform density 1/omega_d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Inhomogeneous,
    Homogeneous,
}

/// Third-order stress and density coefficients (homogeneous normalization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderCoefficients {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedFluidCoefficients {
    pub dim: usize,
    pub normalization: Normalization,
    pub eta0: f64,
    pub eta1: f64,
    pub mu0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub third: Option<ThirdOrderCoefficients>,
}

impl OrderedFluidCoefficients {
    /// Rescales eta1, gamma1, gamma2 to the homogeneous normalization.
    pub fn to_homogeneous(self) -> Self {
        match self.normalization {
            Normalization::Homogeneous => self,
            Normalization::Inhomogeneous => {
                let w = omega(self.dim);
                OrderedFluidCoefficients {
                    normalization: Normalization::Homogeneous,
                    eta1: self.eta1 / w,
                    gamma1: self.gamma1 / w,
                    gamma2: self.gamma2 / w,
                    ..self
                }
            }
        }
    }

    /// Zero-shear viscosity eta0 + eta1 of the homogeneous suspension.
    pub fn zero_shear_viscosity(&self) -> f64 {
        let h = self.to_homogeneous();
        h.eta0 + h.eta1
    }
}

/// Second-order coefficients in the inhomogeneous normalization.
pub fn second_order_coeffs(m: &ModelParams) -> OrderedFluidCoefficients {
    let d = m.dim as f64;
    let w = omega(m.dim);
    let (lam, th, u0) = (m.lambda, m.theta, m.u0_swim);
    OrderedFluidCoefficients {
        dim: m.dim,
        normalization: Normalization::Inhomogeneous,
        eta0: 1.0,
        eta1: lam * (th + 2.0) * w / (2.0 * d * (d + 2.0)),
        mu0: u0 * u0 / (d * (d - 1.0)),
        gamma1: -lam * th * w / (4.0 * d * d * (d + 2.0)),
        gamma2: lam * w / (2.0 * d * d * (d + 4.0)) * (th + 2.0 * d / (d + 2.0)),
        third: None,
    }
}

/// Second- and third-order coefficients in the homogeneous normalization.
pub fn third_order_coeffs(m: &ModelParams) -> OrderedFluidCoefficients {
    let d = m.dim as f64;
    let (lam, th, u0) = (m.lambda, m.theta, m.u0_swim);
    let d3 = d * d * d;
    let third = ThirdOrderCoefficients {
        kappa1: lam * th / (8.0 * d3 * (d + 2.0)),
        kappa2: -lam * (3.0 * th + 2.0 * d / (d + 2.0)) / (8.0 * d3 * (d + 4.0)),
        kappa3: lam
            * (2.0 * d * (3.0 * d * d + 10.0 * d + 6.0)
                + th * (d + 4.0) * (3.0 * d * d + 11.0 * d + 12.0))
            / (8.0 * d3 * (d + 2.0).powi(2) * (d + 4.0) * (d + 6.0)),
        mu1: (3.0 * d + 1.0) * u0 * u0 / (d * (d - 1.0).powi(2) * (d + 2.0)),
        mu2: u0 * u0 / (2.0 * d * (d - 1.0) * (d + 2.0)),
    };
    OrderedFluidCoefficients {
        third: Some(third),
        ..second_order_coeffs(m).to_homogeneous()
    }
}

/// Closed-form viscometric functions of the ordered-fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscometricPrediction {
    pub dim: usize,
    pub eps: f64,
    pub order: u8,
    pub zero_shear_viscosity: f64,
    /// Coefficient c in eta(kappa) = eta0 + c kappa^2; present at order 3.
    pub shear_curvature: Option<f64>,
    pub nu10: f64,
    /// Second normal-stress coefficient; d = 3 only.
    pub nu20: Option<f64>,
    /// eta_E = intercept + slope * kappa for the elongational flow of the dimension.
    pub elongational_intercept: f64,
    pub elongational_slope: f64,
    /// Phase of sigma_12 relative to kappa(t) = sin t.
    pub phase_shift: f64,
}

pub fn predict_viscometric(
    c: &OrderedFluidCoefficients,
    eps: f64,
    order: u8,
    u0_swim: f64,
) -> Result<ViscometricPrediction> {
    if order != 2 && order != 3 {
        return Err(DssError::InvalidParams(format!(
            "order must be 2 or 3, got {order}"
        )));
    }
    let h = c.to_homogeneous();
    let shear_curvature = if order == 3 {
        if u0_swim != 0.0 {
            return Err(DssError::InvalidParams(
                "third-order predictions require u0_swim = 0".into(),
            ));
        }
        let t = h.third.ok_or_else(|| {
            DssError::InvalidParams(
                "third-order coefficients missing; use third_order_coeffs".into(),
            )
        })?;
        Some(2.0 * eps * eps * (t.kappa2 + t.kappa3))
    } else {
        None
    };
    let eta0 = h.eta0 + h.eta1;
    let a1 = eps * h.gamma1;
    let a2 = eps * h.gamma2;
    let (nu20, e_int, e_slope) = if h.dim == 3 {
        (Some(2.0 * a1 + a2), 3.0 * eta0, 3.0 * (a1 + a2))
    } else {
        (None, 4.0 * eta0, 0.0)
    };
    Ok(ViscometricPrediction {
        dim: h.dim,
        eps,
        order,
        zero_shear_viscosity: eta0,
        shear_curvature,
        nu10: -2.0 * a1,
        nu20,
        elongational_intercept: e_int,
        elongational_slope: e_slope,
        phase_shift: (a1 / eta0).atan(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_shear_viscosity_passive_3d() {
        let m = ModelParams::passive(3, 0.1, 0.3);
        let c = second_order_coeffs(&m);
        assert!((c.zero_shear_viscosity() - (1.0 + 4.0 * 0.3 / 15.0)).abs() < 1e-15);
    }

    #[test]
    fn gamma1_2d_arithmetic() {
        let m = ModelParams::passive(2, 0.1, 0.1);
        let c = second_order_coeffs(&m);
        assert!((c.gamma1 + 3.0 * PI / 160.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_ratio_at_theta_6() {
        let c = second_order_coeffs(&ModelParams::passive(3, 0.1, 0.7));
        assert!((c.gamma2 / c.gamma1 + 12.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn newtonian_limit() {
        let c = third_order_coeffs(&ModelParams::passive(3, 0.1, 0.0));
        let t = c.third.unwrap();
        assert_eq!((c.eta1, c.gamma1, c.gamma2), (0.0, 0.0, 0.0));
        assert_eq!((t.kappa1, t.kappa2, t.kappa3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn passive_normal_stresses() {
        let (eps, lam) = (0.2, 0.3);
        let c = third_order_coeffs(&ModelParams::passive(3, eps, lam));
        let p = predict_viscometric(&c, eps, 2, 0.0).unwrap();
        assert!((p.nu10 - eps * lam / 15.0).abs() < 1e-15);
        assert!((p.nu20.unwrap() + eps * lam / 105.0).abs() < 1e-15);
        assert!((p.nu10 / p.nu20.unwrap().abs() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn elongational_viscosity_3d() {
        let (eps, lam, th) = (0.1, 0.4, 2.5);
        let m = ModelParams {
            theta: th,
            ..ModelParams::passive(3, eps, lam)
        };
        let p = predict_viscometric(&third_order_coeffs(&m), eps, 2, 0.0).unwrap();
        assert!((p.elongational_intercept - (3.0 + lam * (2.0 + th) / 10.0)).abs() < 1e-14);
        assert!((p.elongational_slope - eps * lam * (4.0 + th) / 140.0).abs() < 1e-15);
    }

    #[test]
    fn shear_curvature_3d() {
        let (eps, lam, th) = (0.1, 0.4, 6.0);
        let m = ModelParams {
            theta: th,
            ..ModelParams::passive(3, eps, lam)
        };
        let p = predict_viscometric(&third_order_coeffs(&m), eps, 3, 0.0).unwrap();
        let expect = -eps * eps * lam * (19.0 * th - 12.0) / 18900.0;
        assert!((p.shear_curvature.unwrap() - expect).abs() < 1e-16);
    }

    #[test]
    fn third_order_swim_terms() {
        let m = ModelParams {
            u0_swim: 0.0,
            ..ModelParams::passive(3, 0.1, 0.2)
        };
        let t = third_order_coeffs(&m).third.unwrap();
        assert_eq!((t.mu1, t.mu2), (0.0, 0.0));
        let m0 = ModelParams { theta: 0.0, ..m };
        let t0 = third_order_coeffs(&m0).third.unwrap();
        assert_eq!(t0.kappa1, 0.0);
        assert!(t0.kappa2 < 0.0);
    }

    #[test]
    fn order_three_rejects_swimming() {
        let m = ModelParams {
            u0_swim: 0.5,
            ..ModelParams::passive(3, 0.1, 0.2)
        };
        assert!(predict_viscometric(&third_order_coeffs(&m), 0.1, 3, 0.5).is_err());
    }

    #[test]
    fn eps_zero_is_newtonian() {
        let c = third_order_coeffs(&ModelParams::passive(3, 0.1, 0.2));
        let p = predict_viscometric(&c, 0.0, 2, 0.0).unwrap();
        assert_eq!((p.nu10, p.nu20.unwrap(), p.phase_shift), (0.0, 0.0, 0.0));
    }

    fn physical(v0: f64, alpha: f64) -> PhysicalParams {
        PhysicalParams {
            dim: 3,
            fluid_density: 1000.0,
            solvent_viscosity: 1.0,
            thermal_energy: 4e-21,
            rod_length: 2e-6,
            rod_width: 2e-6 / std::f64::consts::E,
            swim_speed: v0,
            dipole_strength: alpha,
            number_density: 1e15,
            flow_speed: 1e-4,
            length_scale: 1e-3,
        }
    }

    #[test]
    fn nondimensionalize_passive_and_ratios() {
        let p = physical(0.0, 3.0);
        let m = nondimensionalize(&p).unwrap();
        assert_eq!(m.theta, 6.0);
        let r = p.resistances().unwrap();
        let l = p.rod_length;
        assert!((r.zeta_rot / (PI * l.powi(3) / 3.0) - 1.0).abs() < 1e-12);
        assert!((r.zeta_tr / (2.0 * PI * l) - 1.0).abs() < 1e-12);
        let ratio = m.pe.value() / m.eps;
        let expect = 6.0 * p.length_scale.powi(2) / l.powi(2);
        assert!((ratio / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nondimensionalize_swimmer_without_dipole() {
        let m = nondimensionalize(&physical(1e-5, 0.0)).unwrap();
        assert_eq!(m.theta, 6.0);
        assert!((m.u0_swim - 0.1).abs() < 1e-15);
    }

    #[test]
    fn nondimensionalize_rejects_thick_rods() {
        let mut p = physical(0.0, 0.0);
        p.rod_width = p.rod_length;
        assert!(nondimensionalize(&p).is_err());
        let mut q = physical(0.0, 0.0);
        q.flow_speed = 0.0;
        assert!(nondimensionalize(&q).is_err());
    }

    #[test]
    fn peclet_serde_round_trip() {
        let m = ModelParams::passive(3, 0.1, 0.2);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"pe\":\"infinity\""));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let f: ModelParams = serde_json::from_str(
            r#"{"re":0,"pe":1,"eps":0.1,"lambda":0.1,"theta":6,"u0_swim":0,"dim":2}"#,
        )
        .unwrap();
        assert_eq!(f.pe, Peclet::Finite(1.0));
    }

    proptest! {
        #[test]
        fn gamma1_sign(lam in 0.0..5.0f64, th in 0.0..50.0f64, dim in 2usize..4) {
            let m = ModelParams { theta: th, ..ModelParams::passive(dim, 0.1, lam) };
            let c = second_order_coeffs(&m);
            prop_assert!(c.gamma1 <= 0.0);
            if lam * th > 0.0 { prop_assert!(c.gamma1 < 0.0); }
        }

        #[test]
        fn homogeneous_consistency(lam in 0.0..5.0f64, th in -20.0..50.0f64, dim in 2usize..4) {
            let m = ModelParams { theta: th, ..ModelParams::passive(dim, 0.1, lam) };
            let i = second_order_coeffs(&m);
            let h = i.to_homogeneous();
            let w = omega(dim);
            for (a, b) in [(i.eta1, h.eta1), (i.gamma1, h.gamma1), (i.gamma2, h.gamma2)] {
                prop_assert!((a / w - b).abs() <= 1e-15 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn gamma_ratio_3d(th in 0.01..100.0f64, lam in 0.01..5.0f64) {
            let m = ModelParams { theta: th, ..ModelParams::passive(3, 0.1, lam) };
            let c = second_order_coeffs(&m);
            let expect = -(10.0 / 7.0) * (1.0 + 6.0 / (5.0 * th));
            prop_assert!((c.gamma2 / c.gamma1 - expect).abs() < 1e-12 * expect.abs());
        }

        #[test]
        fn nu10_consistency_and_monotonicity(th in -10.0..50.0f64, lam in 0.01..5.0f64, eps in 0.01..1.0f64) {
            let m = ModelParams { theta: th, ..ModelParams::passive(3, eps, lam) };
            let c = third_order_coeffs(&m);
            let p = predict_viscometric(&c, eps, 2, 0.0).unwrap();
            prop_assert!((p.nu10 + 2.0 * eps * c.gamma1).abs() < 1e-15);
            let m2 = ModelParams { theta: th + 1.0, ..m };
            let p2 = predict_viscometric(&third_order_coeffs(&m2), eps, 2, 0.0).unwrap();
            prop_assert!(p2.nu10 > p.nu10);
        }
    }
}
