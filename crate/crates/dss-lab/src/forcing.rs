//! Time-dependent body forces h(t, x) on the periodic square.

use serde::{Deserialize, Serialize};

use crate::analytic::{TrigField, TrigVector};
use crate::error::{DssError, Result};
use crate::spectral::{Grid2D, SpectralVector};

/// A smooth force with its exact time derivative.
pub trait VelocityForcing: Sync {
    fn h(&self, grid: &Grid2D, t: f64) -> SpectralVector;
    fn dt_h(&self, grid: &Grid2D, t: f64) -> SpectralVector;
}

/// h(t, x) = (1 + osc_amp sin(freq t)) F(x) for a trigonometric field F.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigForcing {
    pub field: TrigVector,
    #[serde(default)]
    pub osc_amp: f64,
    #[serde(default)]
    pub freq: f64,
}

impl TrigForcing {
    pub fn zero() -> Self {
        TrigForcing::default()
    }

    pub fn steady(field: TrigVector) -> Self {
        TrigForcing {
            field,
            osc_amp: 0.0,
            freq: 0.0,
        }
    }

    /// Named presets: `cellular` (four-roll forcing), `mixed` (four rolls
    /// plus shear and a (2, 1) wave) and `kolmogorov` (h = amp sin(2 pi x2) e1),
    /// optionally modulated in time.
    pub fn preset(name: &str, amp: f64, osc_amp: f64, freq: f64) -> Result<Self> {
        let field = match name {
            "cellular" => {
                let psi = TrigField::wave(0.5 * amp, [1, -1, 0], 0.0)
                    .add(&TrigField::wave(-0.5 * amp, [1, 1, 0], 0.0))
                    .scale(1.0 / (2.0 * std::f64::consts::PI));
                TrigVector::from_stream(&psi)
            }
            "mixed" => {
                let psi = TrigField::wave(0.5 * amp, [1, -1, 0], 0.0)
                    .add(&TrigField::wave(-0.5 * amp, [1, 1, 0], 0.0))
                    .add(&TrigField::wave(0.4 * amp, [0, 1, 0], 0.3))
                    .add(&TrigField::wave(0.3 * amp, [2, 1, 0], 1.1))
                    .scale(1.0 / (2.0 * std::f64::consts::PI));
                TrigVector::from_stream(&psi)
            }
            "kolmogorov" => TrigVector {
                c: [
                    TrigField::wave(amp, [0, 1, 0], -std::f64::consts::FRAC_PI_2),
                    TrigField::default(),
                    TrigField::default(),
                ],
            },
            "none" => TrigVector::default(),
            other => {
                return Err(DssError::InvalidParams(format!(
                    "unknown forcing preset '{other}'"
                )))
            }
        };
        Ok(TrigForcing {
            field,
            osc_amp,
            freq,
        })
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        1.0 + self.osc_amp * (self.freq * t).sin()
    }

    pub fn amplitude_dt(&self, t: f64) -> f64 {
        self.osc_amp * self.freq * (self.freq * t).cos()
    }
}

/// Forcing as written in a configuration: a named preset or an explicit field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingSpec {
    Preset {
        preset: String,
        amp: f64,
        #[serde(default)]
        osc_amp: f64,
        #[serde(default)]
        freq: f64,
    },
    Field(TrigForcing),
}

impl ForcingSpec {
    pub fn preset(name: &str, amp: f64, osc_amp: f64, freq: f64) -> Self {
        ForcingSpec::Preset {
            preset: name.into(),
            amp,
            osc_amp,
            freq,
        }
    }

    pub fn build(&self) -> Result<TrigForcing> {
        match self {
            ForcingSpec::Preset {
                preset,
                amp,
                osc_amp,
                freq,
            } => TrigForcing::preset(preset, *amp, *osc_amp, *freq),
            ForcingSpec::Field(f) => Ok(f.clone()),
        }
    }
}

impl VelocityForcing for TrigForcing {
    fn h(&self, grid: &Grid2D, t: f64) -> SpectralVector {
        self.field.to_spectral(grid).scale(self.amplitude(t))
    }

    fn dt_h(&self, grid: &Grid2D, t: f64) -> SpectralVector {
        self.field.to_spectral(grid).scale(self.amplitude_dt(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let grid = Grid2D::new(8).unwrap();
        let f = TrigForcing::preset("cellular", 1.3, 0.4, 2.0).unwrap();
        let t = 0.7;
        let dt = 1e-6;
        let fd = f.h(&grid, t + dt).sub(&f.h(&grid, t - dt)).scale(0.5 / dt);
        let ex = f.dt_h(&grid, t);
        assert!(grid.l2_norm_vector(&fd.sub(&ex)) < 1e-8);
        assert!(grid
            .divergence(&f.h(&grid, t))
            .data
            .iter()
            .all(|v| v.norm() < 1e-12));
        assert!(TrigForcing::preset("spiral", 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn forcing_round_trips_through_json() {
        let p = ForcingSpec::preset("mixed", 1.0, 0.5, 3.0);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ForcingSpec>(&json).unwrap(), p);
        let f = ForcingSpec::Field(p.build().unwrap());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<ForcingSpec>(&json).unwrap(), f);
        let short: ForcingSpec =
            serde_json::from_str(r#"{"preset": "cellular", "amp": 2.0}"#).unwrap();
        assert_eq!(
            short.build().unwrap(),
            TrigForcing::preset("cellular", 2.0, 0.0, 0.0).unwrap()
        );
    }
}
