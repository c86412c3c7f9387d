//! C interface to the dcseg solvers and to network inference.
//!
//! Every fallible function returns a [`DcsegStatus`]. On failure a message
//! describing the last error of the calling thread can be copied out with
//! [`dcseg_last_error_message`]. Objects are handed out as opaque pointers and
//! must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use dcseg::grid::{GridImage, GridShape, Mask};
use dcseg::maxflow::BinaryEnergy;
use dcseg::network::{forward, NetParams};
use dcseg::size_proposal::{make_bounds, solve_size_knapsack, SizeBounds};
use dcseg::{checkpoint, metrics, Error};

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Numerical = 4,
    Dimension = 5,
    NotSubmodular = 6,
    Io = 7,
    Format = 8,
    Panic = 9,
}

/// A binary energy with unary and Potts terms under construction.
pub struct DcsegEnergy {
    inner: BinaryEnergy,
}

/// Network parameters loaded from a checkpoint.
pub struct DcsegNetwork {
    params: NetParams,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> DcsegStatus {
    match err {
        Error::Config { .. } | Error::InvalidEdge { .. } | Error::Bounds { .. } | Error::Generation(_) => {
            DcsegStatus::InvalidArgument
        }
        Error::Infeasible { .. } => DcsegStatus::Infeasible,
        Error::Numerical(_) | Error::UndefinedRatio => DcsegStatus::Numerical,
        Error::Dimension { .. } => DcsegStatus::Dimension,
        Error::Submodularity { .. } => DcsegStatus::NotSubmodular,
        Error::Io(_) => DcsegStatus::Io,
        Error::Format(_) => DcsegStatus::Format,
        Error::Image { source, .. } => status_of(source),
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), DcsegStatus>) -> DcsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcsegStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            DcsegStatus::Panic
        }
    }
}

fn fail(err: Error) -> DcsegStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> DcsegStatus {
    set_error(format!("null pointer: {what}"));
    DcsegStatus::NullPointer
}

fn invalid(msg: impl Into<String>) -> DcsegStatus {
    set_error(msg.into());
    DcsegStatus::InvalidArgument
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], DcsegStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], DcsegStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn dcseg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates an energy over `nodes` binary variables with zero unaries.
#[no_mangle]
pub extern "C" fn dcseg_energy_new(nodes: usize) -> *mut DcsegEnergy {
    Box::into_raw(Box::new(DcsegEnergy {
        inner: BinaryEnergy::new(nodes),
    }))
}

/// # Safety
/// `energy` must come from [`dcseg_energy_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dcseg_energy_free(energy: *mut DcsegEnergy) {
    if !energy.is_null() {
        drop(Box::from_raw(energy));
    }
}

/// Sets the cost of assigning label 1 to `node`.
///
/// # Safety
/// `energy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcseg_energy_set_unary(energy: *mut DcsegEnergy, node: usize, cost: f64) -> DcsegStatus {
    guard(|| {
        let e = energy.as_mut().ok_or_else(|| null("energy"))?;
        e.inner.set_unary(node, cost).map_err(fail)
    })
}

/// Adds a Potts term of weight `weight` between `p` and `q`. Negative
/// weights are accepted here and rejected by [`dcseg_energy_minimize`].
///
/// # Safety
/// `energy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcseg_energy_add_pairwise(
    energy: *mut DcsegEnergy,
    p: usize,
    q: usize,
    weight: f64,
) -> DcsegStatus {
    guard(|| {
        let e = energy.as_mut().ok_or_else(|| null("energy"))?;
        e.inner.add_pairwise(p, q, weight).map_err(fail)
    })
}

/// Computes a minimum-energy labeling into `labels` (`len` must equal the
/// node count) and, if `energy_out` is non-null, its energy.
///
/// # Safety
/// `energy` must be a live handle; `labels` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dcseg_energy_minimize(
    energy: *const DcsegEnergy,
    labels: *mut u8,
    len: usize,
    energy_out: *mut f64,
) -> DcsegStatus {
    guard(|| {
        let e = energy.as_ref().ok_or_else(|| null("energy"))?;
        if len != e.inner.node_count() {
            return Err(fail(Error::Dimension {
                context: "labels".into(),
                expected: e.inner.node_count(),
                found: len,
            }));
        }
        let out = output(labels, len, "labels")?;
        let cut = e.inner.minimize().map_err(fail)?;
        out.copy_from_slice(&cut.labels);
        if let Some(v) = energy_out.as_mut() {
            *v = dcseg::maxflow::energy_value(&e.inner, &cut.labels).map_err(fail)?;
        }
        Ok(())
    })
}

/// Selects the pixels maximizing `Σ u_p y_p` subject to
/// `s_min <= Σ y_p <= s_max`, writing 0/1 into `selected`.
///
/// # Safety
/// `utilities` and `selected` must be valid for `n` elements.
#[no_mangle]
pub unsafe extern "C" fn dcseg_size_knapsack(
    utilities: *const f64,
    n: usize,
    s_min: usize,
    s_max: usize,
    selected: *mut u8,
) -> DcsegStatus {
    guard(|| {
        let u = input(utilities, n, "utilities")?;
        let out = output(selected, n, "selected")?;
        let bounds = SizeBounds::new(s_min, s_max).map_err(fail)?;
        let y = solve_size_knapsack(u, bounds).map_err(fail)?;
        out.copy_from_slice(&y.to_labels());
        Ok(())
    })
}

/// Size bounds `[floor((1-ε)n), ceil((1+ε)n)]`.
///
/// # Safety
/// `s_min` and `s_max` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcseg_make_bounds(
    true_size: usize,
    epsilon: f64,
    s_min: *mut usize,
    s_max: *mut usize,
) -> DcsegStatus {
    guard(|| {
        let lo = s_min.as_mut().ok_or_else(|| null("s_min"))?;
        let hi = s_max.as_mut().ok_or_else(|| null("s_max"))?;
        let b = make_bounds(true_size, epsilon).map_err(fail)?;
        *lo = b.s_min;
        *hi = b.s_max;
        Ok(())
    })
}

/// Dice overlap of two binary masks of `n` pixels (nonzero = foreground).
///
/// # Safety
/// `pred` and `gt` must be valid for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn dcseg_dice(pred: *const u8, gt: *const u8, n: usize, out: *mut f64) -> DcsegStatus {
    guard(|| {
        let a = input(pred, n, "pred")?;
        let b = input(gt, n, "gt")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let shape = GridShape::new_2d(1, n);
        let mask = |v: &[u8]| Mask::new(shape, v.iter().map(|&x| x != 0).collect());
        *out = metrics::dice(&mask(a).map_err(fail)?, &mask(b).map_err(fail)?).map_err(fail)?;
        Ok(())
    })
}

/// Loads a network checkpoint into `*network`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `network` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dcseg_network_load(path: *const c_char, network: *mut *mut DcsegNetwork) -> DcsegStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let slot = network.as_mut().ok_or_else(|| null("network"))?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let params = checkpoint::load(Path::new(path)).map_err(fail)?;
        *slot = Box::into_raw(Box::new(DcsegNetwork { params }));
        Ok(())
    })
}

/// # Safety
/// `network` must come from [`dcseg_network_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dcseg_network_free(network: *mut DcsegNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Number of parameters of a loaded network, 0 for a null handle.
///
/// # Safety
/// `network` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dcseg_network_param_count(network: *const DcsegNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.params.len())
}

/// Foreground probabilities for a row-major `height x width` image with
/// intensities in [0, 1].
///
/// # Safety
/// `network` must be a live handle; `image` and `probs` valid for
/// `height * width` elements.
#[no_mangle]
pub unsafe extern "C" fn dcseg_network_forward(
    network: *const DcsegNetwork,
    image: *const f64,
    height: usize,
    width: usize,
    probs: *mut f64,
) -> DcsegStatus {
    guard(|| {
        let net = network.as_ref().ok_or_else(|| null("network"))?;
        let n = height
            .checked_mul(width)
            .ok_or_else(|| invalid("image size overflows"))?;
        let pixels = input(image, n, "image")?;
        let out = output(probs, n, "probs")?;
        let img = GridImage::new(GridShape::new_2d(height, width), pixels.to_vec())
            .map_err(|e| invalid(e.to_string()))?;
        let s = forward(&img, &net.params).map_err(fail)?;
        out.copy_from_slice(s.values());
        Ok(())
    })
}
