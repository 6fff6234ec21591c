//! C ABI over the solver and the verification harness.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_from_json` and released by the matching `*_free`. Every fallible call
//! returns a [`PdoStatus`]; on failure the message is kept per thread and
//! read back with [`pdo_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use pdo_core::kernels::{require_elliptic, Propagator};
use pdo_core::symbols::{Symbol, SymbolSpec};
use pdo_core::verify::{verify_estimate, Scenario};
use pdo_core::{Error, SpectralField, SpectralGrid};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NotElliptic = 4,
    Numerical = 5,
    EstimateViolation = 6,
    Io = 7,
    Panic = 8,
}

pub struct PdoGrid {
    inner: SpectralGrid,
}

pub struct PdoSymbol {
    inner: Symbol,
}

pub struct PdoField {
    inner: SpectralField,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> PdoStatus {
    match err {
        Error::InvalidGrid(_) | Error::InvalidArgument { .. } | Error::LevelOutOfBand { .. } => {
            PdoStatus::InvalidArgument
        }
        Error::Config { .. } | Error::Json(_) => PdoStatus::Config,
        Error::NotElliptic { .. } => PdoStatus::NotElliptic,
        Error::EstimateViolation(_) => PdoStatus::EstimateViolation,
        Error::Io(_) => PdoStatus::Io,
        _ => PdoStatus::Numerical,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (PdoStatus, String)>) -> PdoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PdoStatus::Panic
        }
    }
}

fn core(err: Error) -> (PdoStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (PdoStatus, String) {
    (PdoStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (PdoStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PdoStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pdo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Periodic grid on `[-half_width, half_width)^dim` with `n` points per axis.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pdo_grid_new(dim: usize, n: usize, half_width: f64, out: *mut *mut PdoGrid) -> PdoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = SpectralGrid::new(dim, n, half_width).map_err(core)?;
        *out = boxed(PdoGrid { inner: grid });
        Ok(())
    })
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle from [`pdo_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn pdo_grid_len(grid: *const PdoGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.len())
}

/// # Safety
/// `grid` must be null or a handle from [`pdo_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdo_grid_free(grid: *mut PdoGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Builds a symbol from its JSON description, e.g. `{"kind": "heat"}`.
///
/// # Safety
/// `json` must be a NUL-terminated string, `grid` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pdo_symbol_from_json(
    json: *const c_char,
    grid: *const PdoGrid,
    out: *mut *mut PdoSymbol,
) -> PdoStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec: SymbolSpec = pdo_core::config::parse(text).map_err(core)?;
        let sym = spec.build(grid.inner.dim(), Some(&grid.inner)).map_err(core)?;
        *out = boxed(PdoSymbol { inner: sym });
        Ok(())
    })
}

/// # Safety
/// `symbol` must be null or a handle from [`pdo_symbol_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdo_symbol_free(symbol: *mut PdoSymbol) {
    if !symbol.is_null() {
        drop(Box::from_raw(symbol));
    }
}

/// Field from nodal values. `im` may be null for real data.
///
/// # Safety
/// `re` (and `im` when non-null) must point to `len` readable doubles,
/// `grid` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdo_field_from_values(
    grid: *const PdoGrid,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut PdoField,
) -> PdoStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        if re.is_null() {
            return Err(null("re"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if len != grid.inner.len() {
            return Err((
                PdoStatus::InvalidArgument,
                format!("expected {} values, got {len}", grid.inner.len()),
            ));
        }
        let re = std::slice::from_raw_parts(re, len);
        let values = if im.is_null() {
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect()
        } else {
            let im = std::slice::from_raw_parts(im, len);
            re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect()
        };
        let field = SpectralField::from_values(grid.inner, values).map_err(core)?;
        *out = boxed(PdoField { inner: field });
        Ok(())
    })
}

/// Copies nodal values out. `im` may be null to skip imaginary parts.
///
/// # Safety
/// `re` (and `im` when non-null) must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pdo_field_values(field: *const PdoField, re: *mut f64, im: *mut f64, len: usize) -> PdoStatus {
    guard(|| {
        let field = field.as_ref().ok_or_else(|| null("field"))?;
        if re.is_null() {
            return Err(null("re"));
        }
        let values = field.inner.values();
        if len != values.len() {
            return Err((
                PdoStatus::InvalidArgument,
                format!("expected {} values, got {len}", values.len()),
            ));
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        for (r, v) in re.iter_mut().zip(values) {
            *r = v.re;
        }
        if !im.is_null() {
            let im = std::slice::from_raw_parts_mut(im, len);
            for (i, v) in im.iter_mut().zip(values) {
                *i = v.im;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a field handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdo_field_free(field: *mut PdoField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Evolves `u0` from time 0 to `t`. Non-elliptic symbols are rejected.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdo_solve(
    symbol: *const PdoSymbol,
    u0: *const PdoField,
    t: f64,
    out: *mut *mut PdoField,
) -> PdoStatus {
    guard(|| {
        let symbol = symbol.as_ref().ok_or_else(|| null("symbol"))?;
        let u0 = u0.as_ref().ok_or_else(|| null("u0"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        require_elliptic(&symbol.inner, u0.inner.grid()).map_err(core)?;
        let prop = Propagator::new(&symbol.inner, u0.inner.grid(), 0.0, t).map_err(core)?;
        *out = boxed(PdoField {
            inner: prop.apply(&u0.inner),
        });
        Ok(())
    })
}

/// Runs one verification scenario given as JSON and returns its summary
/// JSON through `out`, to be released with [`pdo_string_free`].
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdo_verify_json(scenario_json: *const c_char, out: *mut *mut c_char) -> PdoStatus {
    guard(|| {
        let text = read_str(scenario_json, "scenario_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario: Scenario = pdo_core::config::parse(text).map_err(core)?;
        let report = verify_estimate(&scenario).map_err(core)?;
        let s = serde_json::to_string(&report.summary_json()).map_err(|e| core(e.into()))?;
        *out = CString::new(s).map_err(|e| (PdoStatus::Numerical, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = pdo_last_error_message();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn heat_round_trip_through_handles() {
        unsafe {
            let mut grid = ptr::null_mut();
            assert_eq!(pdo_grid_new(1, 256, 16.0, &mut grid), PdoStatus::Ok);
            let n = pdo_grid_len(grid);
            assert_eq!(n, 256);
            let json = CString::new(r#"{"kind": "heat"}"#).unwrap();
            let mut sym = ptr::null_mut();
            assert_eq!(pdo_symbol_from_json(json.as_ptr(), grid, &mut sym), PdoStatus::Ok);
            let xs: Vec<f64> = (0..n).map(|i| -16.0 + 32.0 * i as f64 / n as f64).collect();
            let re: Vec<f64> = xs.iter().map(|x| (-x * x).exp()).collect();
            let mut u0 = ptr::null_mut();
            assert_eq!(pdo_field_from_values(grid, re.as_ptr(), ptr::null(), n, &mut u0), PdoStatus::Ok);
            let mut u = ptr::null_mut();
            assert_eq!(pdo_solve(sym, u0, 1.0, &mut u), PdoStatus::Ok);
            let mut out = vec![0.0; n];
            assert_eq!(pdo_field_values(u, out.as_mut_ptr(), ptr::null_mut(), n), PdoStatus::Ok);
            // exp(-x^2) under the heat flow: (1 + 4t)^{-1/2} exp(-x^2 / (1 + 4t)).
            for (x, v) in xs.iter().zip(&out) {
                let exact = (-x * x / 5.0).exp() / 5f64.sqrt();
                assert!((v - exact).abs() < 1e-10, "{x} {v} {exact}");
            }
            pdo_field_free(u);
            pdo_field_free(u0);
            pdo_symbol_free(sym);
            pdo_grid_free(grid);
        }
    }

    #[test]
    fn errors_map_to_codes_and_messages() {
        unsafe {
            assert_eq!(pdo_grid_new(1, 256, 16.0, ptr::null_mut()), PdoStatus::NullPointer);
            let mut grid = ptr::null_mut();
            assert_eq!(pdo_grid_new(7, 256, 16.0, &mut grid), PdoStatus::InvalidArgument);
            assert!(grid.is_null());
            assert_eq!(pdo_grid_new(1, 256, 16.0, &mut grid), PdoStatus::Ok);
            let bad = CString::new(r#"{"kind": "heat", "gamma": "x"}"#).unwrap();
            let mut sym = ptr::null_mut();
            assert_eq!(pdo_symbol_from_json(bad.as_ptr(), grid, &mut sym), PdoStatus::Config);
            assert!(last_error().contains("/gamma"));
            let anti = CString::new(r#"{"kind": "anti_dissipative", "gamma": 2.0}"#).unwrap();
            assert_eq!(pdo_symbol_from_json(anti.as_ptr(), grid, &mut sym), PdoStatus::Ok);
            let re = vec![1.0; 256];
            let mut u0 = ptr::null_mut();
            assert_eq!(pdo_field_from_values(grid, re.as_ptr(), ptr::null(), 255, &mut u0), PdoStatus::InvalidArgument);
            assert_eq!(pdo_field_from_values(grid, re.as_ptr(), ptr::null(), 256, &mut u0), PdoStatus::Ok);
            let mut u = ptr::null_mut();
            assert_eq!(pdo_solve(sym, u0, 1.0, &mut u), PdoStatus::NotElliptic);
            pdo_field_free(u0);
            pdo_symbol_free(sym);
            pdo_grid_free(grid);
            pdo_grid_free(ptr::null_mut());
        }
    }

    #[test]
    fn verify_returns_summary_json() {
        let scenario = CString::new(
            r#"{"name": "ffi", "kind": "power_case", "symbol": {"kind": "heat"}, "a": 0.5, "p": 2.0, "q": 2.0,
                "grid": {"dim": 1, "n": 256, "half_width": 16.0}, "horizon": 1.0,
                "data": [{"family": "gaussian", "widths": [1.0]}]}"#,
        )
        .unwrap();
        unsafe {
            let mut out = ptr::null_mut();
            assert_eq!(pdo_verify_json(scenario.as_ptr(), &mut out), PdoStatus::Ok);
            let js: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
            assert!(js["max_ratio"].as_f64().unwrap() > 0.0);
            assert_eq!(js["verdict"], "pass");
            pdo_string_free(out);
        }
    }
}
