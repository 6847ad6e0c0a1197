//! C ABI over the `kselect` training library.
//!
//! Models are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns a [`KsStatus`]; on failure the
//! message is available from [`ks_last_error`] on the same thread until the
//! next failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use kselect::feature_select::{self, FeatureSelectModel, FeatureSelectOptions};
use kselect::qp::SolverOptions;
use kselect::region_select::{self, Bag, RegionSelectModel, RegionSelectOptions};
use kselect::{eval, Error, Histogram, KernelKind};
use libc::{c_char, size_t};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Domain = 3,
    Input = 4,
    Solver = 5,
    Parse = 6,
    Model = 7,
    Io = 8,
    Panic = 9,
}

/// Per-bin kernel selector for the `kernel` arguments.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsKernel {
    Linear = 0,
    ChiSquare = 1,
    Intersection = 2,
}

/// Training options; obtain defaults from [`ks_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOptions {
    pub c: f64,
    pub tol: f64,
    pub step_tol: f64,
    pub max_outer: size_t,
}

/// Opaque feature-selection model.
pub struct KsFeatureModel(FeatureSelectModel);

/// Opaque region-selection model.
pub struct KsRegionModel(RegionSelectModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KsStatus {
    match err.category() {
        "dimension" => KsStatus::Dimension,
        "domain" => KsStatus::Domain,
        "solver" => KsStatus::Solver,
        "parse" => KsStatus::Parse,
        "model" => KsStatus::Model,
        "io" => KsStatus::Io,
        _ => KsStatus::Input,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus the thread's
/// last-error message.
fn guard<F>(f: F) -> KsStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            KsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            KsStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn view<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn view_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `path` must be null or a NUL-terminated string.
unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::Input("path is not valid UTF-8".into())))
}

fn kernel_of(kernel: u32) -> Result<KernelKind, Failure> {
    match kernel {
        k if k == KsKernel::Linear as u32 => Ok(KernelKind::Linear),
        k if k == KsKernel::ChiSquare as u32 => Ok(KernelKind::ChiSquare),
        k if k == KsKernel::Intersection as u32 => Ok(KernelKind::Intersection),
        other => Err(Failure::Lib(Error::Input(format!("unknown kernel code {other}")))),
    }
}

fn rows(values: &[f64], n: usize, d: usize) -> Result<Vec<Histogram>, Failure> {
    if d == 0 {
        return Err(Failure::Lib(Error::Input("dimension must be positive".into())));
    }
    (0..n)
        .map(|i| Histogram::new(values[i * d..(i + 1) * d].to_vec()).map_err(Failure::from))
        .collect()
}

/// # Safety
/// `opts` must be null or point to a valid [`KsOptions`].
unsafe fn options(opts: *const KsOptions) -> KsOptions {
    if opts.is_null() {
        ks_options_default()
    } else {
        *opts
    }
}

fn solver(o: &KsOptions) -> SolverOptions {
    SolverOptions {
        tol: o.tol,
        ..SolverOptions::training()
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ks_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ks_options_default() -> KsOptions {
    let d = FeatureSelectOptions::default();
    KsOptions {
        c: 1.0,
        tol: d.solver.tol,
        step_tol: d.step_tol,
        max_outer: d.max_outer,
    }
}

/// Trains feature selection on `n` row-major samples of dimension `d` with
/// labels in {-1, +1}. `opts` may be null for defaults.
///
/// # Safety
/// `x` must hold `n * d` values, `y` must hold `n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_train(
    x: *const f64,
    n: size_t,
    d: size_t,
    y: *const f64,
    kernel: u32,
    opts: *const KsOptions,
    out: *mut *mut KsFeatureModel,
) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let len = n.checked_mul(d).ok_or(Failure::Lib(Error::Input("n * d overflows".into())))?;
        let xs = rows(view(x, len, "x")?, n, d)?;
        let y = view(y, n, "y")?;
        let o = options(opts);
        let fs_opts = FeatureSelectOptions {
            step_tol: o.step_tol,
            max_outer: o.max_outer,
            solver: solver(&o),
            ..Default::default()
        };
        let model = feature_select::train_feature_selection(&xs, y, kernel_of(kernel)?, o.c, &fs_opts)?;
        *out = Box::into_raw(Box::new(KsFeatureModel(model)));
        Ok(())
    })
}

/// Decision values for `n` row-major samples of dimension `d`.
///
/// # Safety
/// `model` must come from this library; `z` must hold `n * d` values and
/// `scores` must have room for `n`.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_predict(
    model: *const KsFeatureModel,
    z: *const f64,
    n: size_t,
    d: size_t,
    scores: *mut f64,
) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        if d != model.0.dim() {
            return Err(Error::Dimension {
                expected: model.0.dim(),
                got: d,
            }
            .into());
        }
        let len = n.checked_mul(d).ok_or(Failure::Lib(Error::Input("n * d overflows".into())))?;
        let z = view(z, len, "z")?;
        let scores = view_mut(scores, n, "scores")?;
        for (i, s) in scores.iter_mut().enumerate() {
            *s = model.0.predict(&z[i * d..(i + 1) * d])?;
        }
        Ok(())
    })
}

/// Feature dimension of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_dim(model: *const KsFeatureModel) -> size_t {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Copies the learned bin weights into `weights` (length `ks_fs_dim`).
///
/// # Safety
/// `model` must come from this library and `weights` must have room for `len`.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_weights(model: *const KsFeatureModel, weights: *mut f64, len: size_t) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        if len != model.0.p.len() {
            return Err(Error::Dimension {
                expected: model.0.p.len(),
                got: len,
            }
            .into());
        }
        view_mut(weights, len, "weights")?.copy_from_slice(&model.0.p);
        Ok(())
    })
}

/// Number of bins above the relative selection threshold.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_selected_count(model: *const KsFeatureModel) -> size_t {
    model.as_ref().map_or(0, |m| m.0.selected_features())
}

/// Final dual objective, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_objective(model: *const KsFeatureModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.objective())
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_save(model: *const KsFeatureModel, path: *const c_char) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        model.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_load(path: *const c_char, out: *mut *mut KsFeatureModel) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let model = FeatureSelectModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(KsFeatureModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ks_fs_free(model: *mut KsFeatureModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains region selection. Instances are `n_instances` row-major histograms
/// of dimension `d`; bag `b` owns instances `offsets[b]..offsets[b + 1]`
/// (`offsets` has `n_bags + 1` entries, starting at 0 and ending at
/// `n_instances`). Bags are identified by their index.
///
/// # Safety
/// Every pointer must hold the number of values described above and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_train(
    instances: *const f64,
    n_instances: size_t,
    d: size_t,
    offsets: *const size_t,
    labels: *const f64,
    n_bags: size_t,
    kernel: u32,
    opts: *const KsOptions,
    out: *mut *mut KsRegionModel,
) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let len = n_instances
            .checked_mul(d)
            .ok_or(Failure::Lib(Error::Input("n_instances * d overflows".into())))?;
        let hs = rows(view(instances, len, "instances")?, n_instances, d)?;
        let offsets = view(offsets, n_bags + 1, "offsets")?;
        let labels = view(labels, n_bags, "labels")?;
        if offsets[0] != 0 || offsets[n_bags] != n_instances || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Input("offsets must rise from 0 to n_instances".into()).into());
        }
        let bags = (0..n_bags)
            .map(|b| Bag::new(b.to_string(), labels[b], hs[offsets[b]..offsets[b + 1]].to_vec()))
            .collect::<kselect::Result<Vec<_>>>()?;
        let o = options(opts);
        let rs_opts = RegionSelectOptions {
            step_tol: o.step_tol,
            max_outer: o.max_outer,
            solver: solver(&o),
            ..Default::default()
        };
        let model = region_select::train_region_selection(&bags, kernel_of(kernel)?, o.c, &rs_opts)?;
        *out = Box::into_raw(Box::new(KsRegionModel(model)));
        Ok(())
    })
}

/// Decision values for `n` row-major instances of dimension `d`.
///
/// # Safety
/// `model` must come from this library; `h` must hold `n * d` values and
/// `scores` must have room for `n`.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_score_instances(
    model: *const KsRegionModel,
    h: *const f64,
    n: size_t,
    d: size_t,
    scores: *mut f64,
) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        if d == 0 {
            return Err(Error::Input("dimension must be positive".into()).into());
        }
        let len = n.checked_mul(d).ok_or(Failure::Lib(Error::Input("n * d overflows".into())))?;
        let h = view(h, len, "h")?;
        let scores = view_mut(scores, n, "scores")?;
        for (i, s) in scores.iter_mut().enumerate() {
            *s = model.0.score_instance(&h[i * d..(i + 1) * d])?;
        }
        Ok(())
    })
}

/// Copies the learned instance weights of positive training bag `bag` into
/// `weights`, whose length must equal the bag size.
///
/// # Safety
/// `model` must come from this library and `weights` must have room for `len`.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_bag_weights(
    model: *const KsRegionModel,
    bag: size_t,
    weights: *mut f64,
    len: size_t,
) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        let s = model
            .0
            .bag_weights(&bag.to_string())
            .ok_or_else(|| Error::Input(format!("bag {bag} is not a positive training bag")))?;
        if len != s.len() {
            return Err(Error::Dimension {
                expected: s.len(),
                got: len,
            }
            .into());
        }
        view_mut(weights, len, "weights")?.copy_from_slice(s);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_save(model: *const KsRegionModel, path: *const c_char) -> KsStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        model.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_load(path: *const c_char, out: *mut *mut KsRegionModel) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let model = RegionSelectModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(KsRegionModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ks_rs_free(model: *mut KsRegionModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Non-interpolated average precision; `labels[i] > 0` marks a positive.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_average_precision(
    scores: *const f64,
    labels: *const f64,
    n: size_t,
    out: *mut f64,
) -> KsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let scores = view(scores, n, "scores")?;
        let positive: Vec<bool> = view(labels, n, "labels")?.iter().map(|l| *l > 0.0).collect();
        *out = eval::average_precision(scores, &positive)?;
        Ok(())
    })
}
