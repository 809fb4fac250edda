//! Numerical laboratory for the Doi-Saintillan-Shelley kinetic model of rod
//! suspensions, its small-Weissenberg closures and the second- and
//! third-order fluid models derived from them.
//!
//! Modules, bottom-up:
//! - [`params`]: dimensionless parameters and ordered-fluid coefficients.
//! - [`angular`]: calculus on S^1 and S^2.
//! - [`closure`]: closures g1, g2, g3, stresses and Rivlin-Ericksen tensors.
//! - [`spectral`]: pseudospectral fields, Stokes solves and snapshots on the 2D torus.
//! - [`analytic`]: trigonometric fields with exact derivatives.
//! - [`forcing`]: time-dependent body forces.
//! - [`etd`]: exponential time differencing schemes.
//! - [`kinetic`]: time integration of the coupled kinetic system.
//! - [`ordered`]: hierarchical and Boussinesq solutions of the fluid limits.
//! - [`limit`]: eps sweeps comparing kinetic and fluid solutions.
//! - [`rheometry`]: homogeneous angular solves and viscometric functions.
//! - [`harness`]: experiment configuration, sweeps and reports behind the CLI.

pub mod analytic;
pub mod angular;
pub mod closure;
pub mod error;
pub mod etd;
pub mod forcing;
pub mod harness;
pub mod kinetic;
pub mod limit;
pub mod ordered;
pub mod params;
pub mod rheometry;
pub mod spectral;

pub use error::{DssError, Result};
