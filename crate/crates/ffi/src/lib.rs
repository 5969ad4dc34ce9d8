//! C ABI over `isw-core`.
//!
//! Every function returns an [`IswStatus`]; on failure the message is
//! available from [`isw_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`/producer functions and released with the
//! matching `*_free`. Output handles are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use isw_core::linalg::{
    compute_covariance, compute_mean, standardized_covariance, whiten, CovarianceMatrix,
    FeatureMap, RankMode,
};
use isw_core::losses::{self, dwt_loss, irw_loss, iw_loss, SelectionMask};
use isw_core::sensitivity::{derive_mask, kmeans_1d, ClusterConfig, MaskStatus, SensitivityStats};
use isw_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IswStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    NoConvergence = 5,
    RankDeficient = 6,
    Diverged = 7,
    Config = 8,
    Format = 9,
    Verification = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IswLossKind {
    Dwt = 0,
    Iw = 1,
    Irw = 2,
    Isw = 3,
}

/// Channel-major `C×H×W` feature map.
pub struct IswFeatureMap(FeatureMap);

/// Symmetric square matrix.
pub struct IswMatrix(CovarianceMatrix);

/// Strict-upper-triangular selection mask.
pub struct IswMask(SelectionMask);

/// Running variance accumulator for sensitivity analysis.
pub struct IswStats(SensitivityStats);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> IswStatus {
    match e {
        Error::InvalidInput(_) => IswStatus::InvalidInput,
        Error::DimensionMismatch(_) => IswStatus::DimensionMismatch,
        Error::NonFinite(_) => IswStatus::NonFinite,
        Error::NoConvergence { .. } => IswStatus::NoConvergence,
        Error::RankDeficient { .. } => IswStatus::RankDeficient,
        Error::Diverged { .. } => IswStatus::Diverged,
        Error::Config(_) => IswStatus::Config,
        Error::Format { .. } => IswStatus::Format,
        Error::Verification(_) => IswStatus::Verification,
        Error::Io { .. } => IswStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IswStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IswStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            IswStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            IswStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

fn check_capacity(have: usize, need: usize, what: &str) -> Result<(), Fail> {
    if have < need {
        return Err(Fail::Core(Error::DimensionMismatch(format!(
            "{what} buffer holds {have} values, need {need}"
        ))));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn isw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `channels*height*width` values from `data`.
///
/// # Safety
/// `data` must point to that many readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_feature_map_new(
    channels: usize,
    height: usize,
    width: usize,
    data: *const f64,
    out: *mut *mut IswFeatureMap,
) -> IswStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let len = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::InvalidInput("feature map size overflows".into()))?;
        let values = input(data, len, "data")?.to_vec();
        *out = boxed(IswFeatureMap(FeatureMap::new(
            channels, height, width, values,
        )?));
        Ok(())
    })
}

/// # Safety
/// `fm` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isw_feature_map_free(fm: *mut IswFeatureMap) {
    if !fm.is_null() {
        drop(Box::from_raw(fm));
    }
}

/// # Safety
/// `fm` must be a live handle; the dimension pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_feature_map_dims(
    fm: *const IswFeatureMap,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> IswStatus {
    guard(|| {
        let (c, h, w) = deref(fm, "fm")?.0.dims();
        *deref_mut(channels, "channels")? = c;
        *deref_mut(height, "height")? = h;
        *deref_mut(width, "width")? = w;
        Ok(())
    })
}

/// Copies the values into `out`, which must hold at least `C*H*W` doubles.
///
/// # Safety
/// `fm` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isw_feature_map_copy_data(
    fm: *const IswFeatureMap,
    out: *mut f64,
    len: usize,
) -> IswStatus {
    guard(|| {
        let src = deref(fm, "fm")?.0.as_slice();
        check_capacity(len, src.len(), "output")?;
        output(out, len, "out")?[..src.len()].copy_from_slice(src);
        Ok(())
    })
}

/// Validates symmetry of the row-major `dim*dim` buffer.
///
/// # Safety
/// `data` must point to `dim*dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_matrix_new(
    dim: usize,
    data: *const f64,
    out: *mut *mut IswMatrix,
) -> IswStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidInput("matrix size overflows".into()))?;
        let values = input(data, len, "data")?.to_vec();
        *out = boxed(IswMatrix(CovarianceMatrix::new(dim, values)?));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isw_matrix_free(m: *mut IswMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn isw_matrix_dim(m: *const IswMatrix, dim: *mut usize) -> IswStatus {
    guard(|| {
        *deref_mut(dim, "dim")? = deref(m, "m")?.0.dim();
        Ok(())
    })
}

/// Copies the row-major entries into `out` (at least `dim*dim` doubles).
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isw_matrix_copy_data(
    m: *const IswMatrix,
    out: *mut f64,
    len: usize,
) -> IswStatus {
    guard(|| {
        let src = deref(m, "m")?.0.as_slice();
        check_capacity(len, src.len(), "output")?;
        output(out, len, "out")?[..src.len()].copy_from_slice(src);
        Ok(())
    })
}

/// Population covariance `(X - μ)(X - μ)ᵀ / HW`.
///
/// # Safety
/// `x` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_covariance(
    x: *const IswFeatureMap,
    out: *mut *mut IswMatrix,
) -> IswStatus {
    guard(|| {
        let x = &deref(x, "x")?.0;
        let out = deref_mut(out, "out")?;
        *out = boxed(IswMatrix(compute_covariance(x, &compute_mean(x))?));
        Ok(())
    })
}

/// Covariance of the instance-standardized map.
///
/// # Safety
/// `x` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_standardized_covariance(
    x: *const IswFeatureMap,
    out: *mut *mut IswMatrix,
) -> IswStatus {
    guard(|| {
        let x = &deref(x, "x")?.0;
        let out = deref_mut(out, "out")?;
        *out = boxed(IswMatrix(standardized_covariance(x)));
        Ok(())
    })
}

/// `Σ^{-1/2}(X - μ)`. With `lenient` a rank-deficient covariance is
/// pseudo-inverted instead of rejected.
///
/// # Safety
/// `x` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_whiten(
    x: *const IswFeatureMap,
    lenient: bool,
    out: *mut *mut IswFeatureMap,
) -> IswStatus {
    guard(|| {
        let x = &deref(x, "x")?.0;
        let out = deref_mut(out, "out")?;
        let mode = if lenient {
            RankMode::Lenient
        } else {
            RankMode::Strict
        };
        *out = boxed(IswFeatureMap(whiten(x, mode)?));
        Ok(())
    })
}

/// Evaluates one loss and its gradient with respect to `x`.
///
/// `mask` is ignored for `Dwt`; for `Iw`/`Irw` NULL means the full strict
/// upper triangle. `margin` is used by `Irw` only. `grad` may be NULL when
/// only the value is wanted.
///
/// # Safety
/// `x` must be a live handle, `mask` NULL or a live handle, `value` writable,
/// `grad` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn isw_loss(
    x: *const IswFeatureMap,
    kind: IswLossKind,
    mask: *const IswMask,
    margin: f64,
    value: *mut f64,
    grad: *mut *mut IswFeatureMap,
) -> IswStatus {
    guard(|| {
        let x = &deref(x, "x")?.0;
        let value = deref_mut(value, "value")?;
        let full;
        let mask = match mask.as_ref() {
            Some(m) => &m.0,
            None if kind == IswLossKind::Isw => return Err(Fail::Null("mask")),
            None => {
                full = SelectionMask::full(x.channels());
                &full
            }
        };
        let result = match kind {
            IswLossKind::Dwt => dwt_loss(x)?,
            IswLossKind::Iw => iw_loss(x, mask)?,
            IswLossKind::Irw => irw_loss(x, mask, margin)?,
            IswLossKind::Isw => losses::isw_loss(x, mask)?,
        };
        *value = result.value;
        if let Some(g) = grad.as_mut() {
            *g = boxed(IswFeatureMap(result.gradient));
        }
        Ok(())
    })
}

/// Reads a `dim*dim` 0/1 matrix; only the strict upper triangle may be set.
///
/// # Safety
/// `values` must point to `dim*dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_mask_from_values(
    dim: usize,
    values: *const f64,
    out: *mut *mut IswMask,
) -> IswStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidInput("mask size overflows".into()))?;
        let v = input(values, len, "values")?;
        *out = boxed(IswMask(SelectionMask::from_values(dim, v)?));
        Ok(())
    })
}

/// All strict-upper entries selected.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_mask_full(dim: usize, out: *mut *mut IswMask) -> IswStatus {
    guard(|| {
        *deref_mut(out, "out")? = boxed(IswMask(SelectionMask::full(dim)));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isw_mask_free(m: *mut IswMask) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `dim` and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn isw_mask_info(
    m: *const IswMask,
    dim: *mut usize,
    count: *mut usize,
) -> IswStatus {
    guard(|| {
        let m = &deref(m, "m")?.0;
        *deref_mut(dim, "dim")? = m.dim();
        *deref_mut(count, "count")? = m.count();
        Ok(())
    })
}

/// Writes the mask as a row-major `dim*dim` 0/1 matrix.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isw_mask_copy_values(
    m: *const IswMask,
    out: *mut f64,
    len: usize,
) -> IswStatus {
    guard(|| {
        let m = &deref(m, "m")?.0;
        let d = m.dim();
        check_capacity(len, d * d, "output")?;
        let buf = output(out, len, "out")?;
        buf[..d * d].fill(0.0);
        for (i, j) in m.pairs() {
            buf[i * d + j] = 1.0;
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_new(dim: usize, out: *mut *mut IswStats) -> IswStatus {
    guard(|| {
        *deref_mut(out, "out")? = boxed(IswStats(SensitivityStats::new(dim)));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_free(s: *mut IswStats) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Adds one (original, transformed) pair of standardized covariances.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_accumulate(
    s: *mut IswStats,
    original: *const IswMatrix,
    transformed: *const IswMatrix,
) -> IswStatus {
    guard(|| {
        let s = &mut deref_mut(s, "s")?.0;
        s.accumulate_pair(
            &deref(original, "original")?.0,
            &deref(transformed, "transformed")?.0,
        )?;
        Ok(())
    })
}

/// Folds `other` into `s`.
///
/// # Safety
/// Both handles must be live and distinct.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_merge(s: *mut IswStats, other: *const IswStats) -> IswStatus {
    guard(|| {
        let other = &deref(other, "other")?.0;
        deref_mut(s, "s")?.0.merge(other)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_sample_count(
    s: *const IswStats,
    count: *mut usize,
) -> IswStatus {
    guard(|| {
        *deref_mut(count, "count")? = deref(s, "s")?.0.sample_count();
        Ok(())
    })
}

/// The mean variance matrix `V` accumulated so far.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn isw_stats_variance(
    s: *const IswStats,
    out: *mut *mut IswMatrix,
) -> IswStatus {
    guard(|| {
        let v = deref(s, "s")?.0.variance_matrix();
        *deref_mut(out, "out")? = boxed(IswMatrix(v));
        Ok(())
    })
}

/// Optimal 1-D k-means. `labels` receives `n` cluster indices (0 = lowest
/// centroid), `centroids` up to `k` ascending centroids, `effective_k` the
/// number of clusters formed.
///
/// # Safety
/// `values` and `labels` must hold `n` elements, `centroids` `k` elements,
/// `effective_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isw_kmeans_1d(
    values: *const f64,
    n: usize,
    k: usize,
    labels: *mut usize,
    centroids: *mut f64,
    effective_k: *mut usize,
) -> IswStatus {
    guard(|| {
        let v = input(values, n, "values")?;
        let effective_k = deref_mut(effective_k, "effective_k")?;
        let labels = output(labels, n, "labels")?;
        let centroids = output(centroids, k, "centroids")?;
        let r = kmeans_1d(v, k)?;
        labels.copy_from_slice(&r.labels);
        centroids[..r.centroids.len()].copy_from_slice(&r.centroids);
        *effective_k = r.effective_k;
        Ok(())
    })
}

/// Clusters the strict upper triangle of `V` and selects the entries in the
/// `k - m` highest clusters. `degenerate` is set when fewer than `m + 1`
/// clusters could be formed, in which case the mask is empty.
///
/// # Safety
/// `s` must be a live handle; `out` and `degenerate` writable.
#[no_mangle]
pub unsafe extern "C" fn isw_derive_mask(
    s: *const IswStats,
    k: usize,
    m: usize,
    log_scale: bool,
    out: *mut *mut IswMask,
    degenerate: *mut bool,
) -> IswStatus {
    guard(|| {
        let stats = &deref(s, "s")?.0;
        let out = deref_mut(out, "out")?;
        let degenerate = deref_mut(degenerate, "degenerate")?;
        let d = derive_mask(stats, &ClusterConfig { k, m, log_scale })?;
        *degenerate = matches!(d.status, MaskStatus::Degenerate { .. });
        *out = boxed(IswMask(d.mask));
        Ok(())
    })
}
