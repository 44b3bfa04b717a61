use std::ffi::{CStr, CString};
use std::ptr;

use hjmm_ffi::*;

const CONFIG: &str = r#"{
    "space": {"nu": 2.0, "p": 2.0},
    "grid": {"x_max": 20.0, "n_cells": 256},
    "volatility": {
        "family": "exponential",
        "params": {"factors": [{"sigma": 1.0, "lambda": 1.5, "level": 1.3142135623730951, "slope": 0.1}]}
    },
    "noise": {"seed": 3},
    "run": {"t_end": 1.25, "snapshots_stride": 4, "r0": {"kind": "exponential", "level": 1.0, "rate": 1.5}}
}"#;

fn last_error() -> String {
    let p = hjmm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid(nu: f64, x_max: f64, n: usize) -> *mut HjmmGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hjmm_grid_new(nu, 2.0, x_max, n, &mut g) }, HjmmStatus::Ok);
    g
}

fn curve(g: *const HjmmGrid, f: impl Fn(f64) -> f64, x_max: f64) -> *mut HjmmCurve {
    let n = unsafe { hjmm_grid_len(g) };
    let h = x_max / (n - 1) as f64;
    let v: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { hjmm_curve_new(g, v.as_ptr(), v.len(), &mut c) }, HjmmStatus::Ok);
    c
}

#[test]
fn norms_shift_and_bond_price() {
    let g = grid(1.0, 10.0, 1024);
    assert_eq!(unsafe { hjmm_grid_len(g) }, 1025);
    let c = curve(g, |x| 0.05 * (-x).exp(), 10.0);
    let mut n = 0.0;
    assert_eq!(unsafe { hjmm_lp_norm(c, &mut n) }, HjmmStatus::Ok);
    // ∫ 0.0025 e^{−2x} e^{x} dx over [0, 10]
    let exact = (0.0025 * (1.0 - (-10.0f64).exp())).sqrt();
    assert!((n - exact).abs() < 1e-4 * exact, "{n} vs {exact}");
    let mut s = 0.0;
    assert_eq!(unsafe { hjmm_sobolev_norm(c, &mut s) }, HjmmStatus::Ok);
    assert!(s > n);

    let (mut price, mut yld) = (0.0, 0.0);
    assert_eq!(unsafe { hjmm_bond_price(c, 0.0, 1.0, &mut price, &mut yld) }, HjmmStatus::Ok);
    let exact = (-0.05 * (1.0 - (-1.0f64).exp())).exp();
    assert!((price / exact - 1.0).abs() < 1e-6);
    assert!((yld - (-exact.ln())).abs() < 1e-6);
    assert_eq!(unsafe { hjmm_bond_price(c, 2.0, 2.0, &mut price, &mut yld) }, HjmmStatus::Ok);
    assert_eq!(price, 1.0);
    assert!(yld.is_nan());

    let mut shifted = ptr::null_mut();
    assert_eq!(unsafe { hjmm_shift(c, 0.625, &mut shifted) }, HjmmStatus::Ok);
    let mut sv = vec![0.0; unsafe { hjmm_curve_len(shifted) }];
    assert_eq!(unsafe { hjmm_curve_values(shifted, sv.as_mut_ptr(), sv.len()) }, HjmmStatus::Ok);
    assert!((sv[0] - 0.05 * (-0.625f64).exp()).abs() < 1e-15);
    assert_eq!(*sv.last().unwrap(), 0.0);

    unsafe {
        hjmm_curve_free(shifted);
        hjmm_curve_free(c);
        hjmm_grid_free(g);
    }
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hjmm_grid_new(-1.0, 2.0, 10.0, 64, &mut g) }, HjmmStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(last_error().contains("nu"), "{}", last_error());
    assert_eq!(unsafe { hjmm_grid_new(1.0, 2.0, 10.0, 64, ptr::null_mut()) }, HjmmStatus::NullPointer);

    let g = grid(1.0, 0.0, 64);
    let v = [0.0; 3];
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { hjmm_curve_new(g, v.as_ptr(), 3, &mut c) }, HjmmStatus::InvalidArgument);
    let c = curve(g, |_| 0.01, 40.0);
    let (mut price, mut yld) = (0.0, 0.0);
    assert_eq!(unsafe { hjmm_bond_price(c, 0.0, 41.0, &mut price, &mut yld) }, HjmmStatus::InvalidArgument);
    assert!(last_error().contains("outside"));
    assert_eq!(unsafe { hjmm_lp_norm(ptr::null(), &mut price) }, HjmmStatus::NullPointer);
    // success clears the message
    assert_eq!(unsafe { hjmm_lp_norm(c, &mut price) }, HjmmStatus::Ok);
    assert!(hjmm_last_error_message().is_null());

    let bad = CString::new("{\"space\": {}}").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hjmm_config_from_json(bad.as_ptr(), &mut cfg) }, HjmmStatus::ConfigError);
    unsafe {
        hjmm_curve_free(c);
        hjmm_grid_free(g);
        hjmm_grid_free(ptr::null_mut());
        hjmm_string_free(ptr::null_mut());
    }
}

#[test]
fn config_check_and_simulate() {
    let text = CString::new(CONFIG).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hjmm_config_from_json(text.as_ptr(), &mut cfg) }, HjmmStatus::Ok);

    let mut holds = -1;
    let mut js = ptr::null_mut();
    assert_eq!(unsafe { hjmm_check_invariant(cfg, &mut holds, &mut js) }, HjmmStatus::Ok);
    assert_eq!(holds, 1);
    let report: serde_json::Value = serde_json::from_str(&unsafe { CStr::from_ptr(js) }.to_string_lossy()).unwrap();
    assert_eq!(report["omega2"], -1.0);
    assert_eq!(report["n0"], 2);
    unsafe { hjmm_string_free(js) };

    let mut eff = ptr::null_mut();
    assert_eq!(unsafe { hjmm_config_effective_json(cfg, &mut eff) }, HjmmStatus::Ok);
    let eff_text = unsafe { CStr::from_ptr(eff) }.to_owned();
    let echoed: serde_json::Value = serde_json::from_str(&eff_text.to_string_lossy()).unwrap();
    assert_eq!(echoed["run"]["dt"], 20.0 / 256.0);
    unsafe { hjmm_string_free(eff) };

    let run = |cfg: *const HjmmConfig| {
        let mut fin = ptr::null_mut();
        let mut js = ptr::null_mut();
        assert_eq!(unsafe { hjmm_simulate(cfg, &mut fin, &mut js) }, HjmmStatus::Ok);
        let mut v = vec![0.0; unsafe { hjmm_curve_len(fin) }];
        assert_eq!(unsafe { hjmm_curve_values(fin, v.as_mut_ptr(), v.len()) }, HjmmStatus::Ok);
        let summary: serde_json::Value = serde_json::from_str(&unsafe { CStr::from_ptr(js) }.to_string_lossy()).unwrap();
        unsafe {
            hjmm_string_free(js);
            hjmm_curve_free(fin);
        }
        (v, summary)
    };
    let (a, summary) = run(cfg);
    assert_eq!(summary["norms"].as_array().unwrap().len(), 17);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { hjmm_config_from_json(eff_text.as_ptr(), &mut again) }, HjmmStatus::Ok);
    let (b, _) = run(again);
    assert_eq!(a, b);
    unsafe {
        hjmm_config_free(cfg);
        hjmm_config_free(again);
    }
}
