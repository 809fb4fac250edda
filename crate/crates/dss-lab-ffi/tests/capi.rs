use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dss_lab_ffi::*;

fn passive3() -> DssModelParams {
    DssModelParams {
        re: 0.0,
        pe: f64::INFINITY,
        eps: 0.1,
        lambda: 0.1,
        theta: 6.0,
        u0_swim: 0.0,
        dim: 3,
    }
}

fn last_error() -> Option<String> {
    let p = dss_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { dss_string_free(p) };
    Some(s)
}

#[test]
fn coefficients_and_predictions() {
    let p = passive3();
    let mut c = DssCoefficients::default();
    assert_eq!(unsafe { dss_coefficients(&p, &mut c) }, DssStatus::Ok);
    assert!((c.eta0 + c.eta1 - (1.0 + 4.0 * 0.1 / 15.0)).abs() < 1e-15);
    let mut v = DssViscometrics::default();
    assert_eq!(
        unsafe { dss_predict_viscometric(&p, &mut v) },
        DssStatus::Ok
    );
    assert!((v.nu10 / v.nu20.abs() - 7.0).abs() < 1e-12);
    assert!(last_error().is_none());
}

#[test]
fn errors_are_reported_per_thread() {
    let bad = DssModelParams {
        dim: 4,
        ..passive3()
    };
    let mut c = DssCoefficients::default();
    assert_eq!(
        unsafe { dss_coefficients(&bad, &mut c) },
        DssStatus::InvalidArgument
    );
    assert!(last_error().unwrap().contains("dim"));
    std::thread::spawn(|| assert!(last_error().is_none()))
        .join()
        .unwrap();
    assert_eq!(
        unsafe { dss_coefficients(ptr::null(), &mut c) },
        DssStatus::NullPointer
    );
    unsafe { dss_string_free(ptr::null_mut()) };
}

#[test]
fn steady_shear_matches_prediction() {
    let p = passive3();
    let mut r = DssSteadyResponse::default();
    assert_eq!(
        unsafe { dss_steady_response(&p, DssFlow::SimpleShear, 1e-3, 8, &mut r) },
        DssStatus::Ok
    );
    assert!((r.eta - (1.0 + 4.0 * 0.1 / 15.0)).abs() < 1e-6);
    assert_eq!(r.stress[1], r.stress[3]);
    assert!(r.eta_e.is_nan());
    assert_eq!(
        unsafe { dss_steady_response(&p, DssFlow::Elongation, 1.0, 40, &mut r) },
        DssStatus::InvalidArgument
    );
}

#[test]
fn kinetic_handle_lifecycle() {
    let p = DssModelParams {
        pe: 1.0,
        dim: 2,
        lambda: 0.5,
        theta: 0.4,
        u0_swim: 0.5,
        ..passive3()
    };
    let name = CString::new("cellular").unwrap();
    let mut h: *mut DssKinetic = ptr::null_mut();
    assert_eq!(
        unsafe { dss_kinetic_new(&p, 16, 8, 0.005, name.as_ptr(), 1.0, &mut h) },
        DssStatus::Ok
    );
    assert!(!h.is_null());
    assert_eq!(unsafe { dss_kinetic_advance(h, 0.05) }, DssStatus::Ok);
    assert!((unsafe { dss_kinetic_time(h) } - 0.05).abs() < 1e-14);
    assert!(unsafe { dss_kinetic_mass_defect(h) } < 1e-12);
    let mut rho = vec![0.0; 256];
    assert_eq!(
        unsafe { dss_kinetic_density(h, rho.as_mut_ptr(), rho.len()) },
        DssStatus::Ok
    );
    let mean = rho.iter().sum::<f64>() / 256.0;
    assert!((mean * 2.0 * std::f64::consts::PI - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { dss_kinetic_density(h, rho.as_mut_ptr(), 10) },
        DssStatus::InvalidArgument
    );
    unsafe { dss_kinetic_free(h) };
    unsafe { dss_kinetic_free(ptr::null_mut()) };

    let spiral = CString::new("spiral").unwrap();
    let mut h2: *mut DssKinetic = 1 as *mut DssKinetic;
    assert_eq!(
        unsafe { dss_kinetic_new(&p, 16, 8, 0.005, spiral.as_ptr(), 1.0, &mut h2) },
        DssStatus::InvalidArgument
    );
    assert!(h2.is_null());
}

#[test]
fn experiment_entry_point() {
    let dir = tempfile::tempdir().unwrap();
    let json = format!(r#"{{"out_dir": {:?}}}"#, dir.path().to_str().unwrap());
    let cfg = CString::new(json).unwrap();
    let sub = CString::new("coeffs").unwrap();
    let mut code = -1;
    assert_eq!(
        unsafe { dss_run_experiment(sub.as_ptr(), cfg.as_ptr(), &mut code) },
        DssStatus::Ok
    );
    assert_eq!(code, 0);
    assert!(dir.path().join("manifest.json").exists());
    let bad = CString::new("dance").unwrap();
    assert_eq!(
        unsafe { dss_run_experiment(bad.as_ptr(), cfg.as_ptr(), &mut code) },
        DssStatus::InvalidArgument
    );
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/dss_lab.h"),
    )
    .unwrap();
    for f in [
        "dss_last_error_message",
        "dss_string_free",
        "dss_coefficients",
        "dss_predict_viscometric",
        "dss_steady_response",
        "dss_kinetic_new",
        "dss_kinetic_free",
        "dss_kinetic_advance",
        "dss_kinetic_time",
        "dss_kinetic_mass_defect",
        "dss_kinetic_density",
        "dss_run_experiment",
        "typedef struct DssKinetic DssKinetic;",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

/// Compiles and runs a C client against the header and the static library.
#[test]
fn c_client_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let deps = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = [
        deps.join("libdss_lab_ffi.a"),
        deps.join("../libdss_lab_ffi.a"),
    ]
    .into_iter()
    .find(|p| p.exists())
    .expect("static library not built next to the test binary");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "dss_lab.h"
int main(void) {
    DssModelParams p = {0.0, INFINITY, 0.1, 0.1, 6.0, 0.0, 3};
    DssViscometrics v;
    if (dss_predict_viscometric(&p, &v) != DSS_STATUS_OK) return 1;
    if (fabs(v.nu10 / fabs(v.nu20) - 7.0) > 1e-12) return 2;
    p.dim = 5;
    if (dss_predict_viscometric(&p, &v) != DSS_STATUS_INVALID_ARGUMENT) return 3;
    char *msg = dss_last_error_message();
    if (!msg) return 4;
    dss_string_free(msg);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is required");
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C client exited with {:?}",
        out.status.code()
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
