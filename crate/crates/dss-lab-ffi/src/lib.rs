//! C ABI of the dss-lab rod suspension laboratory.
//!
//! Every fallible function returns a [`DssStatus`]; on failure the message is
//! kept per thread and read with [`dss_last_error_message`]. Kinetic runs are
//! owned through the opaque [`DssKinetic`] handle. Strings returned by the
//! library are released with [`dss_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dss_lab::angular::AngularBasis;
use dss_lab::forcing::TrigForcing;
use dss_lab::harness::{execute, ExperimentConfig, Subcommand};
use dss_lab::kinetic::{KineticConfig, KineticSolver, KineticState};
use dss_lab::params::{predict_viscometric, third_order_coeffs, ModelParams, Peclet};
use dss_lab::rheometry::{angular_steady_state, measure, FlowKind, ImposedFlow};
use dss_lab::spectral::Grid2D;
use dss_lab::DssError;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Precondition = 3,
    SolverFailure = 4,
    Io = 5,
    Panic = 6,
}

/// Dimensionless parameters; `pe <= 0` or non-finite means Pe = infinity.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DssModelParams {
    pub re: f64,
    pub pe: f64,
    pub eps: f64,
    pub lambda: f64,
    pub theta: f64,
    pub u0_swim: f64,
    pub dim: u32,
}

/// Ordered-fluid coefficients in the homogeneous normalization.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DssCoefficients {
    pub eta0: f64,
    pub eta1: f64,
    pub mu0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Second-order viscometric predictions; `nu20` is NaN in d = 2.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DssViscometrics {
    pub zero_shear_viscosity: f64,
    pub nu10: f64,
    pub nu20: f64,
    pub elongational_intercept: f64,
    pub elongational_slope: f64,
    pub phase_shift: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DssFlow {
    SimpleShear = 0,
    Elongation = 1,
}

/// Steady homogeneous stress response; absent entries are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DssSteadyResponse {
    /// Deviatoric total stress, row-major 3 x 3.
    pub stress: [f64; 9],
    pub eta: f64,
    pub n1: f64,
    pub n2: f64,
    pub eta_e: f64,
}

/// Opaque kinetic run: state, configuration and forcing.
pub struct DssKinetic {
    cfg: KineticConfig,
    forcing: TrigForcing,
    state: KineticState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &DssError) -> DssStatus {
    match err {
        DssError::InvalidParams(_) | DssError::Json(_) => DssStatus::InvalidArgument,
        DssError::Precondition(_) => DssStatus::Precondition,
        DssError::Io(_) | DssError::Csv(_) => DssStatus::Io,
        e if e.is_solver_failure() => DssStatus::SolverFailure,
        DssError::AtEpsilon { source, .. } => status_of(source),
        _ => DssStatus::SolverFailure,
    }
}

/// Runs `f`, recording errors and panics in the thread-local slot.
fn guard<F: FnOnce() -> Result<(), (DssStatus, String)>>(f: F) -> DssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DssStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dss-lab".into());
            DssStatus::Panic
        }
    }
}

fn lift(err: DssError) -> (DssStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (DssStatus, String) {
    (DssStatus::NullPointer, format!("{what} is null"))
}

fn to_params(p: &DssModelParams) -> ModelParams {
    ModelParams {
        re: p.re,
        pe: if p.pe > 0.0 && p.pe.is_finite() {
            Peclet::Finite(p.pe)
        } else {
            Peclet::Infinite
        },
        eps: p.eps,
        lambda: p.lambda,
        theta: p.theta,
        u0_swim: p.u0_swim,
        dim: p.dim as usize,
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (DssStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        (
            DssStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

/// Message of the last failed call on this thread, or null. Free with
/// [`dss_string_free`].
#[no_mangle]
pub extern "C" fn dss_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Second- and third-order coefficients (homogeneous normalization).
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dss_coefficients(
    params: *const DssModelParams,
    out: *mut DssCoefficients,
) -> DssStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = to_params(p);
        m.validate().map_err(lift)?;
        let c = third_order_coeffs(&m);
        let t = c.third.unwrap_or(dss_lab::params::ThirdOrderCoefficients {
            kappa1: f64::NAN,
            kappa2: f64::NAN,
            kappa3: f64::NAN,
            mu1: f64::NAN,
            mu2: f64::NAN,
        });
        *out = DssCoefficients {
            eta0: c.eta0,
            eta1: c.eta1,
            mu0: c.mu0,
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            kappa1: t.kappa1,
            kappa2: t.kappa2,
            kappa3: t.kappa3,
            mu1: t.mu1,
            mu2: t.mu2,
        };
        Ok(())
    })
}

/// Second-order viscometric predictions at `params.eps`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dss_predict_viscometric(
    params: *const DssModelParams,
    out: *mut DssViscometrics,
) -> DssStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = to_params(p);
        m.validate().map_err(lift)?;
        let v = predict_viscometric(&third_order_coeffs(&m), m.eps, 2, m.u0_swim).map_err(lift)?;
        *out = DssViscometrics {
            zero_shear_viscosity: v.zero_shear_viscosity,
            nu10: v.nu10,
            nu20: v.nu20.unwrap_or(f64::NAN),
            elongational_intercept: v.elongational_intercept,
            elongational_slope: v.elongational_slope,
            phase_shift: v.phase_shift,
        };
        Ok(())
    })
}

/// Steady angular response to an imposed homogeneous flow of the given rate.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dss_steady_response(
    params: *const DssModelParams,
    flow: DssFlow,
    rate: f64,
    degree: u32,
    out: *mut DssSteadyResponse,
) -> DssStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = to_params(p);
        m.validate().map_err(lift)?;
        if !(2..=16).contains(&degree) {
            return Err((
                DssStatus::InvalidArgument,
                format!("degree must be in 2..=16, got {degree}"),
            ));
        }
        let kind = match flow {
            DssFlow::SimpleShear => FlowKind::SimpleShear,
            DssFlow::Elongation => FlowKind::Elongation,
        };
        let basis = AngularBasis::new(m.dim, degree as usize);
        let f = ImposedFlow::new(kind, rate, m.dim).map_err(lift)?;
        let g = angular_steady_state(&f, &m, &basis).map_err(lift)?;
        let v = measure(&basis, &g, &f, &m).map_err(lift)?;
        let mut stress = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                stress[3 * i + j] = v.stress[i][j];
            }
        }
        *out = DssSteadyResponse {
            stress,
            eta: v.eta.unwrap_or(f64::NAN),
            n1: v.n1.unwrap_or(f64::NAN),
            n2: v.n2.unwrap_or(f64::NAN),
            eta_e: v.eta_e.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Creates a 2D kinetic run on an `n` x `n` grid with `m_max` angular modes,
/// started from the isotropic uniform state and driven by a named forcing
/// preset (`none`, `cellular`, `mixed`, `kolmogorov`). Writes null to `out`
/// on failure.
///
/// # Safety
/// `params` and `forcing` must be valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_new(
    params: *const DssModelParams,
    n: u32,
    m_max: u32,
    dt: f64,
    forcing: *const c_char,
    amp: f64,
    out: *mut *mut DssKinetic,
) -> DssStatus {
    if let Some(o) = out.as_mut() {
        *o = ptr::null_mut();
    }
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let name = read_str(forcing, "forcing")?;
        let m = to_params(p);
        m.validate_coupled().map_err(lift)?;
        let cfg = KineticConfig {
            n: n as usize,
            m_max: m_max as usize,
            dt,
            ..Default::default()
        };
        cfg.validate().map_err(lift)?;
        let forcing = TrigForcing::preset(name, amp, 0.0, 0.0).map_err(lift)?;
        let grid = Grid2D::new(cfg.n).map_err(lift)?;
        let state = KineticState::isotropic(m, grid, cfg.m_max).map_err(lift)?;
        *out = Box::into_raw(Box::new(DssKinetic {
            cfg,
            forcing,
            state,
        }));
        Ok(())
    })
}

/// Releases a kinetic run; null is ignored.
///
/// # Safety
/// `h` must be null or a handle from [`dss_kinetic_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_free(h: *mut DssKinetic) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Advances the run to time `t_end`.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_advance(h: *mut DssKinetic, t_end: f64) -> DssStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        let solver = KineticSolver::new(h.cfg, &h.forcing, None).map_err(lift)?;
        let span = (t_end - h.state.t).max(f64::MIN_POSITIVE);
        solver
            .run(&mut h.state, t_end, span, |_, _| Ok(()))
            .map_err(lift)?;
        Ok(())
    })
}

/// Current time of the run, NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_time(h: *const DssKinetic) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.state.t)
}

/// |integral of f - 1|, NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_mass_defect(h: *const DssKinetic) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.state.mass_defect())
}

/// Copies the nodal density (row-major, `n * n` values) into `buf`.
///
/// # Safety
/// `h` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dss_kinetic_density(
    h: *const DssKinetic,
    buf: *mut f64,
    len: usize,
) -> DssStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let vals = h.state.grid.inverse(&h.state.density());
        if len != vals.len() {
            return Err((
                DssStatus::InvalidArgument,
                format!("buffer holds {len} values, need {}", vals.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&vals);
        Ok(())
    })
}

/// Runs a CLI subcommand (`coeffs`, `rheometry`, `simulate`, `convergence`,
/// `boussinesq-compare`) on a JSON configuration and stores the CLI exit
/// code (0 pass, 2 threshold failure) in `exit_code`.
///
/// # Safety
/// `subcommand` and `config_json` must be valid C strings, `exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn dss_run_experiment(
    subcommand: *const c_char,
    config_json: *const c_char,
    exit_code: *mut i32,
) -> DssStatus {
    guard(|| {
        let sub = read_str(subcommand, "subcommand")?;
        let json = read_str(config_json, "config_json")?;
        let code = exit_code.as_mut().ok_or_else(|| null("exit_code"))?;
        let sub: Subcommand = sub.parse().map_err(lift)?;
        let cfg = ExperimentConfig::from_json(json).map_err(lift)?;
        let outcome = execute(sub, &cfg).map_err(lift)?;
        *code = outcome.exit_code();
        Ok(())
    })
}
