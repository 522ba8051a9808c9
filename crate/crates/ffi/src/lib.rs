//! C interface to `bkreg`.
//!
//! Datasets and models are opaque handles created by `bkreg_*_new`/`fit`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`BkregStatus`]; on failure the message is available from
//! [`bkreg_last_error_message`] on the same thread until the next failing
//! call. Handles are immutable after creation and may be shared between
//! threads for prediction.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bkreg::benchmark::{fit_kernel_rows, fit_neighbor_rows, BkrInit, BmknnMode, Method, SelectionOptions};
use bkreg::dataset::{load_yacht, Dataset};
use bkreg::evidence::{evidence_with_full_gradient, HyperParams};
use bkreg::gpr::{GprModel, SEHypers};
use bkreg::kernel::BandwidthSpec;
use bkreg::laplacian::{LaplacianModel, WeightSpec};
use bkreg::model::FittedModel;
use bkreg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    KOutOfRange = 4,
    NotPositiveDefinite = 5,
    Io = 6,
    Parse = 7,
    Serialization = 8,
    /// The model kind does not support the requested operation.
    Unsupported = 9,
    Panic = 10,
}

/// Opaque dataset handle.
pub struct BkregDataset(Dataset);

/// Opaque fitted-model handle.
pub struct BkregModel(FittedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BkregStatus {
    match e {
        Error::InvalidInput(_) => BkregStatus::InvalidInput,
        Error::DimensionMismatch { .. } => BkregStatus::DimensionMismatch,
        Error::KOutOfRange { .. } => BkregStatus::KOutOfRange,
        Error::NotPositiveDefinite { .. } => BkregStatus::NotPositiveDefinite,
        Error::Parse { .. } => BkregStatus::Parse,
        Error::Io { .. } => BkregStatus::Io,
        Error::Json(_) => BkregStatus::Serialization,
    }
}

struct Fail(BkregStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BkregStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BkregStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BkregStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            BkregStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn dataset<'a>(p: *const BkregDataset) -> Result<&'a Dataset, Fail> {
    p.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

unsafe fn model<'a>(p: *const BkregModel) -> Result<&'a FittedModel, Fail> {
    p.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(BkregStatus::InvalidInput, "path is not valid UTF-8".into()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn bandwidth_arg(h: *const f64, len: usize, dim: usize) -> Result<BandwidthSpec, Fail> {
    let hs = slice(h, len, "bandwidths")?;
    let spec = match hs.len() {
        0 => return Err(Fail(BkregStatus::InvalidInput, "no bandwidth given".into())),
        1 => BandwidthSpec::Single(hs[0]),
        _ => BandwidthSpec::PerDim(hs.to_vec()),
    };
    spec.validate(dim)?;
    Ok(spec)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bkreg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bkreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a dataset from `n` row-major input vectors of length `dim` and
/// `n` targets.
#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_new(
    inputs: *const f64,
    n: usize,
    dim: usize,
    targets: *const f64,
    out: *mut *mut BkregDataset,
) -> BkregStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| Fail(BkregStatus::InvalidInput, "n * dim overflows".into()))?;
        let x = slice(inputs, len, "inputs")?.to_vec();
        let y = slice(targets, n, "targets")?.to_vec();
        put(out, BkregDataset(Dataset::new(x, dim, y)?))
    })
}

/// Reads a CSV file with header `x1,...,xd,y`.
#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_read_csv(
    path: *const c_char,
    out: *mut *mut BkregDataset,
) -> BkregStatus {
    guard(|| {
        let p = path_arg(path)?;
        put(out, BkregDataset(Dataset::read_csv(p)?))
    })
}

/// Reads the 7-column yacht hydrodynamics data file.
#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_read_yacht(
    path: *const c_char,
    out: *mut *mut BkregDataset,
) -> BkregStatus {
    guard(|| {
        let p = path_arg(path)?;
        put(out, BkregDataset(load_yacht(p)?))
    })
}

/// Number of rows, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_len(ds: *const BkregDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Input dimension, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_dim(ds: *const BkregDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn bkreg_dataset_free(ds: *mut BkregDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Classical kernel regression. `bandwidths` holds one shared value or one
/// per input dimension.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_kr(
    ds: *const BkregDataset,
    bandwidths: *const f64,
    n_bandwidths: usize,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let bw = bandwidth_arg(bandwidths, n_bandwidths, d.dim())?;
        put(out, BkregModel(FittedModel::kr(d.clone(), bw)?))
    })
}

/// Classical k-NN (`mutual == 0`) or mutual k-NN regression.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_knn(
    ds: *const BkregDataset,
    k: usize,
    mutual: c_int,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?.clone();
        let m = if mutual != 0 { FittedModel::mknn(d, k)? } else { FittedModel::knn(d, k)? };
        put(out, BkregModel(m))
    })
}

/// Bayesian kernel regression at fixed hyperparameters.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_bkr_fixed(
    ds: *const BkregDataset,
    bandwidths: *const f64,
    n_bandwidths: usize,
    sigma0: f64,
    sigma: f64,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let bandwidth = bandwidth_arg(bandwidths, n_bandwidths, d.dim())?;
        let p = HyperParams::kernel(bandwidth, sigma0, sigma);
        p.validate()?;
        let m = LaplacianModel::fit(d.clone(), p.weight_spec()?, p.sigma2())?;
        put(out, BkregModel(FittedModel::Bayesian { model: m }))
    })
}

/// Bayesian kernel regression with hyperparameters chosen by evidence
/// maximization from the given start. `multi_bandwidth` selects one
/// bandwidth per dimension; `bandwidth_only` holds `sigma0` and `sigma`
/// fixed.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_bkr_evidence(
    ds: *const BkregDataset,
    init_bandwidth: f64,
    sigma0: f64,
    sigma: f64,
    multi_bandwidth: c_int,
    bandwidth_only: c_int,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let init = BkrInit {
            bandwidth: init_bandwidth,
            sigma0,
            sigma,
            bandwidth_only: bandwidth_only != 0,
        };
        let rows = fit_kernel_rows(d, multi_bandwidth != 0, &init, &SelectionOptions::default())?;
        let row = rows.into_iter().find(|r| r.method == Method::Bkr).expect("Bayesian row");
        put(out, BkregModel(row.model))
    })
}

/// Bayesian mutual k-NN regression at fixed hyperparameters.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_bmknn_fixed(
    ds: *const BkregDataset,
    k: usize,
    sigma0: f64,
    sigma: f64,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let p = HyperParams::mutual(k, sigma0, sigma);
        p.validate()?;
        let m = LaplacianModel::fit(d.clone(), WeightSpec::MutualKnn { k, sigma0 }, p.sigma2())?;
        put(out, BkregModel(FittedModel::Bayesian { model: m }))
    })
}

/// Bayesian mutual k-NN regression with `k` in `1..=kmax` (0 means
/// `min(n - 1, 50)`) chosen by evidence. With `refine != 0`, `sigma0` and
/// `sigma` are only the start of an alternating ascent; otherwise they stay
/// fixed.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_bmknn_evidence(
    ds: *const BkregDataset,
    kmax: usize,
    sigma0: f64,
    sigma: f64,
    refine: c_int,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let opts = SelectionOptions {
            kmax: (kmax > 0).then_some(kmax),
            ..SelectionOptions::default()
        };
        let mode = if refine != 0 {
            BmknnMode::Refined { sigma0, sigma }
        } else {
            BmknnMode::Fixed { sigma0, sigma }
        };
        let rows = fit_neighbor_rows(d, &mode, &opts)?;
        let row = rows.into_iter().find(|r| r.method == Method::Bmknn).expect("Bayesian row");
        put(out, BkregModel(row.model))
    })
}

/// Gaussian-process regression with squared-exponential covariance.
/// `inv_lengthscales` holds one value per dimension, or a single value
/// shared by all.
#[no_mangle]
pub unsafe extern "C" fn bkreg_fit_gpr(
    ds: *const BkregDataset,
    v0: f64,
    v1: f64,
    inv_lengthscales: *const f64,
    n_lengthscales: usize,
    out: *mut *mut BkregModel,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let mut ls = slice(inv_lengthscales, n_lengthscales, "inv_lengthscales")?.to_vec();
        if ls.len() == 1 {
            ls = vec![ls[0]; d.dim()];
        }
        let m = GprModel::fit(d.clone(), SEHypers::new(v0, v1, ls)?)?;
        put(out, BkregModel(FittedModel::Gpr { model: m }))
    })
}

/// Input dimension the model expects, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bkreg_model_dim(m: *const BkregModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// 1 if predictions carry a variance (Bayesian and GP models), else 0.
#[no_mangle]
pub unsafe extern "C" fn bkreg_model_has_variance(m: *const BkregModel) -> c_int {
    m.as_ref().map_or(0, |m| c_int::from(m.0.has_variance()))
}

/// Predicts `n` row-major queries of length `dim`. `means` must hold `n`
/// values; `variances` may be NULL, otherwise it receives `n` values (NaN
/// for models without a variance).
#[no_mangle]
pub unsafe extern "C" fn bkreg_model_predict(
    m: *const BkregModel,
    queries: *const f64,
    n: usize,
    dim: usize,
    means: *mut f64,
    variances: *mut f64,
) -> BkregStatus {
    guard(|| {
        let m = model(m)?;
        if dim != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: dim }.into());
        }
        if n == 0 {
            return Ok(());
        }
        if means.is_null() {
            return Err(null("means"));
        }
        let xs = slice(queries, n * dim, "queries")?;
        let mut out = Vec::with_capacity(n);
        for x in xs.chunks_exact(dim) {
            out.push(m.predict(x)?);
        }
        let means = std::slice::from_raw_parts_mut(means, n);
        for (dst, (mean, _)) in means.iter_mut().zip(&out) {
            *dst = *mean;
        }
        if !variances.is_null() {
            let vars = std::slice::from_raw_parts_mut(variances, n);
            for (dst, (_, var)) in vars.iter_mut().zip(&out) {
                *dst = var.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Log evidence of a Bayesian or GP model on its training data.
#[no_mangle]
pub unsafe extern "C" fn bkreg_model_log_evidence(m: *const BkregModel, out: *mut f64) -> BkregStatus {
    guard(|| {
        let v = match model(m)? {
            FittedModel::Bayesian { model } => model.log_evidence()?,
            FittedModel::Gpr { model } => model.log_evidence(),
            other => {
                return Err(Fail(
                    BkregStatus::Unsupported,
                    format!("{} models have no evidence", other.method()),
                ))
            }
        };
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Log evidence of the Bayesian kernel model and its gradient with respect
/// to the log hyperparameters `[ln h_1..ln h_b, ln sigma0, ln sigma]`.
/// `gradient` may be NULL; otherwise it must hold `n_bandwidths + 2` values.
#[no_mangle]
pub unsafe extern "C" fn bkreg_kernel_log_evidence(
    ds: *const BkregDataset,
    bandwidths: *const f64,
    n_bandwidths: usize,
    sigma0: f64,
    sigma: f64,
    log_evidence: *mut f64,
    gradient: *mut f64,
) -> BkregStatus {
    guard(|| {
        let d = dataset(ds)?;
        let bw = bandwidth_arg(bandwidths, n_bandwidths, d.dim())?;
        let p = HyperParams::kernel(bw, sigma0, sigma);
        p.validate()?;
        let (v, g) = evidence_with_full_gradient(d, &p)?;
        if log_evidence.is_null() {
            return Err(null("log_evidence"));
        }
        *log_evidence = v;
        if !gradient.is_null() {
            std::slice::from_raw_parts_mut(gradient, g.len()).copy_from_slice(&g);
        }
        Ok(())
    })
}

/// Serializes a model to JSON. Release the string with
/// [`bkreg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bkreg_model_to_json(m: *const BkregModel, out: *mut *mut c_char) -> BkregStatus {
    guard(|| {
        let s = model(m)?.to_json()?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(s).expect("JSON has no NULs").into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bkreg_model_from_json(json: *const c_char, out: *mut *mut BkregModel) -> BkregStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let s = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(BkregStatus::InvalidInput, "JSON is not valid UTF-8".into()))?;
        put(out, BkregModel(FittedModel::from_json(s)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bkreg_model_free(m: *mut BkregModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bkreg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
