//! C ABI over `congestion_lab`.
//!
//! Every fallible function returns a [`ClStatus`]; on failure a message is
//! available from [`cl_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Output pointers are
//! only written on success.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use libc::{c_char, c_int, size_t};

use congestion_lab::color::Rgb;
use congestion_lab::error::Error;
use congestion_lab::evaluation;
use congestion_lab::forecasters::{arima_fit, svr_fit, ArimaModel, ArimaOrder, Bandwidth, SvrModel, SvrParams};
use congestion_lab::frame_extraction::{classify_pixel, TrafficPalette};
use congestion_lab::road_network::{read_registry, read_registry_file, RoadNetwork};
use congestion_lab::series_store::{read_matrix_file, resample, IntensityMatrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad argument: invalid UTF-8, zero length, out-of-range index.
    InvalidArgument = 2,
    /// Missing file or unreadable input.
    MissingInput = 3,
    /// Inconsistent data (registry, matrix, split, model).
    Data = 4,
    /// Malformed CSV or header.
    Schema = 5,
    /// Degenerate input, non-convergence or timeout.
    Numerical = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Road network loaded from a segment registry.
pub struct ClNetwork(RoadNetwork);
/// Timestamps × intersections intensity matrix.
pub struct ClMatrix(IntensityMatrix);
/// Fitted ε-SVR regressor.
pub struct ClSvrModel(SvrModel);
/// Fitted ARIMA model.
pub struct ClArimaModel(ArimaModel);
/// Pixel color palette.
pub struct ClPalette(TrafficPalette);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ClStatus {
    if matches!(e, Error::Config(_)) {
        return ClStatus::InvalidArgument;
    }
    match e.exit_code() {
        2 => ClStatus::MissingInput,
        4 => ClStatus::Schema,
        5 => ClStatus::Numerical,
        _ => ClStatus::Data,
    }
}

struct Failure(ClStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ClStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ClStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            ClStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(ClStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ptr<T>(p: *mut T, name: &str) -> Result<&'static mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(ClStatus::NullPointer, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ClStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: size_t, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(ClStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default palette (#63D668, #FF974D, #F23C32, #811F1F, tolerance 30).
#[no_mangle]
pub extern "C" fn cl_palette_default() -> *mut ClPalette {
    boxed(ClPalette(TrafficPalette::default()))
}

/// Palette from four `0xRRGGBB` level colors (level 1 first) and a
/// Euclidean RGB tolerance.
///
/// # Safety
/// `colors` must point to 4 readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_palette_new(colors: *const u32, tolerance: f64, out: *mut *mut ClPalette) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        non_null(colors, "colors")?;
        let c = std::slice::from_raw_parts(colors, 4);
        let rgb = |v: u32| Rgb([(v >> 16) as u8, (v >> 8) as u8, v as u8]);
        let p = TrafficPalette::new([rgb(c[0]), rgb(c[1]), rgb(c[2]), rgb(c[3])], tolerance)?;
        *out = boxed(ClPalette(p));
        Ok(())
    })
}

/// # Safety
/// `palette` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_palette_free(palette: *mut ClPalette) {
    free(palette)
}

/// Congestion level 0..=4 of one pixel; 0 when no color is within tolerance.
/// A null palette means the default palette.
///
/// # Safety
/// `palette` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_classify_pixel(palette: *const ClPalette, r: u8, g: u8, b: u8) -> u8 {
    let default;
    let p = match palette.as_ref() {
        Some(p) => &p.0,
        None => {
            default = TrafficPalette::default();
            &default
        }
    };
    classify_pixel(Rgb([r, g, b]), p).value()
}

/// Root mean squared error of two equal-length vectors.
///
/// # Safety
/// `truth` and `pred` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_rmse(truth: *const f64, pred: *const f64, len: size_t, out: *mut f64) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = evaluation::rmse(slice(truth, len, "truth")?, slice(pred, len, "pred")?)?;
        Ok(())
    })
}

/// Mean absolute error of two equal-length vectors.
///
/// # Safety
/// As [`cl_rmse`].
#[no_mangle]
pub unsafe extern "C" fn cl_mae(truth: *const f64, pred: *const f64, len: size_t, out: *mut f64) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = evaluation::mae(slice(truth, len, "truth")?, slice(pred, len, "pred")?)?;
        Ok(())
    })
}

/// Pearson correlation. `*defined` is set to 0 (and `*out` to NaN) when
/// either vector is constant.
///
/// # Safety
/// As [`cl_rmse`]; `defined` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_corr(
    truth: *const f64,
    pred: *const f64,
    len: size_t,
    out: *mut f64,
    defined: *mut c_int,
) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let defined = out_ptr(defined, "defined")?;
        let r = evaluation::corr(slice(truth, len, "truth")?, slice(pred, len, "pred")?)?;
        *out = r.unwrap_or(f64::NAN);
        *defined = r.is_some() as c_int;
        Ok(())
    })
}

/// Loads a registry CSV file (`segment_id,color_hex,from_id,to_id`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_network_load(path: *const c_char, out: *mut *mut ClNetwork) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let rows = read_registry_file(Path::new(string(path, "path")?))?;
        *out = boxed(ClNetwork(RoadNetwork::from_registry(&rows)?));
        Ok(())
    })
}

/// Parses registry CSV text.
///
/// # Safety
/// As [`cl_network_load`].
#[no_mangle]
pub unsafe extern "C" fn cl_network_parse(csv: *const c_char, out: *mut *mut ClNetwork) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let rows = read_registry(string(csv, "csv")?.as_bytes())?;
        *out = boxed(ClNetwork(RoadNetwork::from_registry(&rows)?));
        Ok(())
    })
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_network_intersection_count(net: *const ClNetwork) -> size_t {
    net.as_ref().map_or(0, |n| n.0.intersections().count())
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_network_segment_count(net: *const ClNetwork) -> size_t {
    net.as_ref().map_or(0, |n| n.0.segments().len())
}

/// Number of distinct upstream neighbors of `node`.
///
/// # Safety
/// `net` must be a live handle, `node` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_network_neighbor_count(
    net: *const ClNetwork,
    node: *const c_char,
    out: *mut size_t,
) -> ClStatus {
    guard(|| {
        let net = &non_null(net, "net")?.0;
        let out = out_ptr(out, "out")?;
        let id = net.node(string(node, "node")?)?;
        *out = net.neighbors(id)?.len();
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_network_free(net: *mut ClNetwork) {
    free(net)
}

/// Reads a matrix CSV (`timestamp,<node>,...`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_load(path: *const c_char, out: *mut *mut ClMatrix) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(ClMatrix(read_matrix_file(Path::new(string(path, "path")?))?));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_rows(m: *const ClMatrix) -> size_t {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_columns(m: *const ClMatrix) -> size_t {
    m.as_ref().map_or(0, |m| m.0.width())
}

/// Cell value; `*present` is 0 for a missing cell.
///
/// # Safety
/// `m` must be a live handle; `value` and `present` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_get(
    m: *const ClMatrix,
    row: size_t,
    col: size_t,
    value: *mut u64,
    present: *mut c_int,
) -> ClStatus {
    guard(|| {
        let m = &non_null(m, "matrix")?.0;
        let value = out_ptr(value, "value")?;
        let present = out_ptr(present, "present")?;
        if row >= m.rows() || col >= m.width() {
            return Err(invalid(format!(
                "cell ({row}, {col}) outside {}×{} matrix",
                m.rows(),
                m.width()
            )));
        }
        let v = m.get(row, col);
        *value = v.unwrap_or(0);
        *present = v.is_some() as c_int;
        Ok(())
    })
}

/// Decimates to `interval_secs` (a multiple of 30) into a new matrix.
///
/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_resample(
    m: *const ClMatrix,
    interval_secs: u32,
    out: *mut *mut ClMatrix,
) -> ClStatus {
    guard(|| {
        let m = &non_null(m, "matrix")?.0;
        let out = out_ptr(out, "out")?;
        *out = boxed(ClMatrix(resample(m, interval_secs)?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_matrix_free(m: *mut ClMatrix) {
    free(m)
}

/// Fits an RBF ε-SVR. `rows` is row-major `n × dim`. `sigma <= 0` selects
/// the median heuristic; `tolerance <= 0` keeps the default 1e-3.
///
/// # Safety
/// `rows` must hold `n*dim` values, `targets` `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_svr_fit(
    rows: *const f64,
    n: size_t,
    dim: size_t,
    targets: *const f64,
    c: f64,
    epsilon: f64,
    sigma: f64,
    tolerance: f64,
    out: *mut *mut ClSvrModel,
) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let flat = slice(rows, n * dim, "rows")?;
        let y = slice(targets, n, "targets")?;
        let x: Vec<Vec<f64>> = flat.chunks(dim).map(|r| r.to_vec()).collect();
        let mut params = SvrParams {
            c,
            epsilon,
            ..SvrParams::default()
        };
        if sigma > 0.0 {
            params.sigma = Bandwidth::Fixed(sigma);
        }
        if tolerance > 0.0 {
            params.tolerance = tolerance;
        }
        *out = boxed(ClSvrModel(svr_fit(&x, y, &params, None)?));
        Ok(())
    })
}

/// Predicts one raw (unstandardized) feature row of width `dim`.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `dim` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_svr_predict(
    model: *const ClSvrModel,
    x: *const f64,
    dim: size_t,
    out: *mut f64,
) -> ClStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        let out = out_ptr(out, "out")?;
        *out = m.predict(slice(x, dim, "x")?)?;
        Ok(())
    })
}

/// Bandwidth actually used by the fit.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_svr_sigma(model: *const ClSvrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.sigma)
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_svr_free(model: *mut ClSvrModel) {
    free(model)
}

/// Fits ARIMA(p,d,q) to one contiguous series.
///
/// # Safety
/// `series` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_fit(
    series: *const f64,
    n: size_t,
    p: u32,
    d: u32,
    q: u32,
    out: *mut *mut ClArimaModel,
) -> ClStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let order = ArimaOrder::new(p as usize, d as usize, q as usize)?;
        *out = boxed(ClArimaModel(arima_fit(slice(series, n, "series")?, order)?));
        Ok(())
    })
}

/// Writes `steps` forecasts continuing the training series into `out`.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `steps` values.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_forecast(model: *const ClArimaModel, steps: size_t, out: *mut f64) -> ClStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        if steps == 0 {
            return Ok(());
        }
        out_ptr(out, "out")?;
        let f = m.forecast(steps);
        std::slice::from_raw_parts_mut(out, steps).copy_from_slice(&f);
        Ok(())
    })
}

/// Writes `steps` forecasts continuing `history` (original scale).
///
/// # Safety
/// `history` must hold `len` values; `out` must hold `steps` values.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_forecast_from(
    model: *const ClArimaModel,
    history: *const f64,
    len: size_t,
    steps: size_t,
    out: *mut f64,
) -> ClStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        let f = m.forecast_from(slice(history, len, "history")?, steps)?;
        if steps == 0 {
            return Ok(());
        }
        out_ptr(out, "out")?;
        std::slice::from_raw_parts_mut(out, steps).copy_from_slice(&f);
        Ok(())
    })
}

/// Copies up to `cap` AR weights into `out`; returns the count available.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `cap` values or be null.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_ar_weights(model: *const ClArimaModel, out: *mut f64, cap: size_t) -> size_t {
    let Some(m) = model.as_ref() else { return 0 };
    let w = &m.0.ar_weights;
    if !out.is_null() {
        let k = w.len().min(cap);
        std::slice::from_raw_parts_mut(out, k).copy_from_slice(&w[..k]);
    }
    w.len()
}

/// Regression constant of the differenced process.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_intercept(model: *const ClArimaModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.intercept)
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_arima_free(model: *mut ClArimaModel) {
    free(model)
}
