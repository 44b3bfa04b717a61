//! C interface to the hjmm toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Every fallible call returns an [`HjmmStatus`]; on failure the message is
//! available from [`hjmm_last_error_message`] on the same thread. Strings returned through
//! out-parameters are owned by the caller and released with [`hjmm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use hjmm::config::{Resolved, RunConfig};
use hjmm::ergodicity::check_invariant_condition;
use hjmm::finance::bond_price;
use hjmm::semigroup::ShiftSemigroup;
use hjmm::solver::simulate;
use hjmm::weighted_spaces::{lp_nu_norm, w1p_nu_norm, Curve, Grid, SpaceParams};
use hjmm::HjmmError;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjmmStatus {
    Ok = 0,
    /// A parameter was rejected, or curves live on different grids.
    InvalidArgument = 1,
    /// The run configuration could not be parsed or validated.
    ConfigError = 2,
    /// Non-finite values, Picard non-convergence or a failed linear solve.
    NumericalError = 3,
    IoError = 4,
    NullPointer = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Uniform grid on `[0, x_max]` with its space parameters.
pub struct HjmmGrid(Arc<Grid>);

/// Forward curve sampled on a grid.
pub struct HjmmCurve(Curve);

/// Validated run configuration.
pub struct HjmmConfig {
    effective: RunConfig,
    resolved: Resolved,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &HjmmError) -> HjmmStatus {
    match e {
        HjmmError::InvalidParameter(_)
        | HjmmError::DimensionMismatch { .. }
        | HjmmError::GridMismatch
        | HjmmError::OutOfRange(_) => HjmmStatus::InvalidArgument,
        HjmmError::Config(_) | HjmmError::Json(_) => HjmmStatus::ConfigError,
        HjmmError::NumericalAbort { .. } | HjmmError::PicardNonConvergence { .. } | HjmmError::LinearSolve(_) => {
            HjmmStatus::NumericalError
        }
        HjmmError::Io(_) | HjmmError::Csv(_) => HjmmStatus::IoError,
    }
}

enum Failure {
    Null(&'static str),
    Lib(HjmmError),
}

impl From<HjmmError> for Failure {
    fn from(e: HjmmError) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(HjmmError::Json(e))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HjmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HjmmStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HjmmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error");
            HjmmStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn hjmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hjmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hjmm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Grid with `n_cells` cells on `[0, x_max]`; `x_max <= 0` selects `40/nu`.
///
/// # Safety
/// `out_grid` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_grid_new(
    nu: f64,
    p: f64,
    x_max: f64,
    n_cells: usize,
    out_grid: *mut *mut HjmmGrid,
) -> HjmmStatus {
    guard(|| {
        let slot = out(out_grid, "out_grid")?;
        let params = SpaceParams::new(nu, p)?;
        let x_max = if x_max > 0.0 { x_max } else { params.default_x_max() };
        let g = Grid::new(params, x_max, n_cells)?;
        *slot = Box::into_raw(Box::new(HjmmGrid(g)));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`hjmm_grid_new`] and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hjmm_grid_free(grid: *mut HjmmGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of nodes, `n_cells + 1`; zero for a null grid.
///
/// # Safety
/// `grid` must be null or a live grid.
#[no_mangle]
pub unsafe extern "C" fn hjmm_grid_len(grid: *const HjmmGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Curve from `len` node values; `len` must equal the grid length.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out_curve` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_curve_new(
    grid: *const HjmmGrid,
    values: *const f64,
    len: usize,
    out_curve: *mut *mut HjmmCurve,
) -> HjmmStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let slot = out(out_curve, "out_curve")?;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let v = slice::from_raw_parts(values, len).to_vec();
        let c = Curve::new(g.0.clone(), v)?;
        *slot = Box::into_raw(Box::new(HjmmCurve(c)));
        Ok(())
    })
}

/// # Safety
/// `curve` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hjmm_curve_free(curve: *mut HjmmCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of node values; zero for a null curve.
///
/// # Safety
/// `curve` must be null or a live curve.
#[no_mangle]
pub unsafe extern "C" fn hjmm_curve_len(curve: *const HjmmCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.values().len())
}

/// Copies the node values into `out_values`, which holds `len` doubles.
///
/// # Safety
/// `out_values` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hjmm_curve_values(curve: *const HjmmCurve, out_values: *mut f64, len: usize) -> HjmmStatus {
    guard(|| {
        let c = deref(curve, "curve")?;
        if out_values.is_null() {
            return Err(Failure::Null("out_values"));
        }
        let v = c.0.values();
        if len != v.len() {
            return Err(HjmmError::DimensionMismatch {
                expected: v.len(),
                got: len,
            }
            .into());
        }
        slice::from_raw_parts_mut(out_values, len).copy_from_slice(v);
        Ok(())
    })
}

/// Weighted Lebesgue norm of the curve.
///
/// # Safety
/// `curve` must be live and `out_norm` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_lp_norm(curve: *const HjmmCurve, out_norm: *mut f64) -> HjmmStatus {
    guard(|| {
        *out(out_norm, "out_norm")? = lp_nu_norm(&deref(curve, "curve")?.0);
        Ok(())
    })
}

/// Weighted Sobolev norm of the curve.
///
/// # Safety
/// `curve` must be live and `out_norm` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_sobolev_norm(curve: *const HjmmCurve, out_norm: *mut f64) -> HjmmStatus {
    guard(|| {
        *out(out_norm, "out_norm")? = w1p_nu_norm(&deref(curve, "curve")?.0);
        Ok(())
    })
}

/// `f(· + t)` with zero beyond the grid.
///
/// # Safety
/// `curve` must be live and `out_curve` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_shift(curve: *const HjmmCurve, t: f64, out_curve: *mut *mut HjmmCurve) -> HjmmStatus {
    guard(|| {
        let c = deref(curve, "curve")?;
        let slot = out(out_curve, "out_curve")?;
        let s = ShiftSemigroup::zero_extension(c.0.grid().clone()).shift(t, &c.0)?;
        *slot = Box::into_raw(Box::new(HjmmCurve(s)));
        Ok(())
    })
}

/// Zero-coupon bond price of maturity `maturity` for the curve observed at time `t`. The yield
/// is NaN when `maturity == t`.
///
/// # Safety
/// `curve` must be live; the out-pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_bond_price(
    curve: *const HjmmCurve,
    t: f64,
    maturity: f64,
    out_price: *mut f64,
    out_yield: *mut f64,
) -> HjmmStatus {
    guard(|| {
        let c = deref(curve, "curve")?;
        let price = out(out_price, "out_price")?;
        let yld = out(out_yield, "out_yield")?;
        let q = bond_price(&c.0, t, maturity)?;
        *price = q.price;
        *yld = q.yield_.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Parses and validates a JSON run configuration.
///
/// # Safety
/// `json` must be a nul-terminated string and `out_config` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_config_from_json(json: *const c_char, out_config: *mut *mut HjmmConfig) -> HjmmStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let slot = out(out_config, "out_config")?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| HjmmError::Config(format!("configuration is not UTF-8: {e}")))?;
        let effective = RunConfig::from_json(text)?.effective()?;
        let resolved = effective.resolve()?;
        *slot = Box::into_raw(Box::new(HjmmConfig { effective, resolved }));
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`hjmm_config_from_json`] and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hjmm_config_free(config: *mut HjmmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// The configuration with every default written out, as JSON.
///
/// # Safety
/// `config` must be live and `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_config_effective_json(config: *const HjmmConfig, out_json: *mut *mut c_char) -> HjmmStatus {
    guard(|| {
        let c = deref(config, "config")?;
        let slot = out(out_json, "out_json")?;
        *slot = into_c_string(serde_json::to_string(&c.effective)?);
        Ok(())
    })
}

/// Evaluates the invariant-measure condition. `out_holds` receives 1 or 0 and `out_json`,
/// when not null, the full report.
///
/// # Safety
/// `config` must be live; `out_holds` valid for writes; `out_json` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_check_invariant(
    config: *const HjmmConfig,
    out_holds: *mut i32,
    out_json: *mut *mut c_char,
) -> HjmmStatus {
    guard(|| {
        let c = deref(config, "config")?;
        let holds = out(out_holds, "out_holds")?;
        let report = check_invariant_condition(&c.resolved.spec, c.effective.volatility.n_gamma)?;
        *holds = i32::from(report.condition_holds);
        if let Some(slot) = out_json.as_mut() {
            *slot = into_c_string(serde_json::to_string(&report)?);
        }
        Ok(())
    })
}

/// Simulates the configured path. `out_final` receives the terminal curve and `out_json`, when
/// not null, the step times, norms and diagnostics.
///
/// # Safety
/// `config` must be live; `out_final` valid for writes; `out_json` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hjmm_simulate(
    config: *const HjmmConfig,
    out_final: *mut *mut HjmmCurve,
    out_json: *mut *mut c_char,
) -> HjmmStatus {
    guard(|| {
        let c = deref(config, "config")?;
        let slot = out(out_final, "out_final")?;
        let path = simulate(&c.resolved.sim)?;
        if let Some(js) = out_json.as_mut() {
            *js = into_c_string(serde_json::to_string(&path)?);
        }
        *slot = Box::into_raw(Box::new(HjmmCurve(path.final_curve().clone())));
        Ok(())
    })
}
