//! C ABI over the simulator core. Every object crosses the boundary as an
//! opaque handle created and destroyed here; every fallible call returns a
//! status code and records a thread-local message retrievable with
//! [`submfl_last_error_message`].
//!
//! The matching header lives at `include/submfl.h` and is regenerated by
//! the build script.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;

use submfl::checkpoint::{Checkpoint, Provenance};
use submfl::config::{load_config, Overrides};
use submfl::data::{load_idx, synthetic_blobs, Dataset};
use submfl::error::Error;
use submfl::nn::{evaluate, ParamSet};
use submfl::orchestrator::run_experiment;
use submfl::pruning::{generate_submodels, global_sparsity, Mask, PruneMode, SubModelCascade};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum submfl_status {
    Ok = 0,
    NullPointer = 1,
    Utf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Data = 5,
    Runtime = 6,
}

/// Weight-selection rule for pruning.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum submfl_prune_mode {
    Quantile = 0,
    MaxNormalized = 1,
}

impl From<submfl_prune_mode> for PruneMode {
    fn from(mode: submfl_prune_mode) -> Self {
        match mode {
            submfl_prune_mode::Quantile => PruneMode::Quantile,
            submfl_prune_mode::MaxNormalized => PruneMode::MaxNormalized,
        }
    }
}

/// A model handle: parameters plus the optional mask they were trained
/// under and the checkpoint provenance.
pub struct submfl_model {
    params: ParamSet,
    mask: Option<Mask>,
    provenance: Provenance,
}

/// A loaded dataset.
pub struct submfl_dataset {
    inner: Dataset,
}

/// A generated submodel cascade.
pub struct submfl_cascade {
    inner: SubModelCascade,
    provenance: Provenance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> submfl_status {
    match err {
        Error::Config(_) => submfl_status::Config,
        Error::InvalidArgument(_) | Error::InvalidSpec(_) => submfl_status::InvalidArgument,
        Error::IdxBadMagic { .. }
        | Error::IdxTruncated { .. }
        | Error::IdxCountMismatch { .. }
        | Error::Checkpoint(_)
        | Error::Io { .. } => submfl_status::Data,
        _ => submfl_status::Runtime,
    }
}

fn fail(err: Error) -> submfl_status {
    let status = status_for(&err);
    set_last_error(err);
    status
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, submfl_status> {
    if ptr.is_null() {
        set_last_error("null string argument");
        return Err(submfl_status::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8");
        submfl_status::Utf8
    })
}

unsafe fn out_arg<'a, T>(ptr: *mut T) -> Result<&'a mut T, submfl_status> {
    if ptr.is_null() {
        set_last_error("null output argument");
        return Err(submfl_status::NullPointer);
    }
    Ok(&mut *ptr)
}

macro_rules! require {
    ($expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn submfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn submfl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a model checkpoint.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_model_load(
    path: *const c_char,
    out: *mut *mut submfl_model,
) -> submfl_status {
    let path = require!(str_arg(path));
    let out = require!(out_arg(out));
    let ck = match Checkpoint::load(std::path::Path::new(path)) {
        Ok(ck) => ck,
        Err(e) => return fail(e),
    };
    let params = match ck.to_params() {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let mask = match ck.to_mask() {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    *out = Box::into_raw(Box::new(submfl_model {
        params,
        mask,
        provenance: ck.provenance,
    }));
    submfl_status::Ok
}

/// Save a model handle as a checkpoint.
///
/// # Safety
/// `model` must be a live handle from this library; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn submfl_model_save(
    model: *const submfl_model,
    path: *const c_char,
) -> submfl_status {
    let path = require!(str_arg(path));
    if model.is_null() {
        set_last_error("null model handle");
        return submfl_status::NullPointer;
    }
    let model = &*model;
    let ck = match Checkpoint::from_params(
        &model.params,
        model.mask.as_ref(),
        model.provenance.clone(),
    ) {
        Ok(ck) => ck,
        Err(e) => return fail(e),
    };
    match ck.save(std::path::Path::new(path)) {
        Ok(()) => submfl_status::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `model` must be a handle from this library, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn submfl_model_free(model: *mut submfl_model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total parameter count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn submfl_model_param_count(model: *const submfl_model) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).params.total_params()
}

/// Percentage of exactly-zero parameters, or -1 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn submfl_model_global_sparsity(model: *const submfl_model) -> f64 {
    if model.is_null() {
        return -1.0;
    }
    global_sparsity(&(*model).params)
}

/// Load an IDX image/label pair.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_dataset_load_idx(
    images_path: *const c_char,
    labels_path: *const c_char,
    out: *mut *mut submfl_dataset,
) -> submfl_status {
    let images = require!(str_arg(images_path));
    let labels = require!(str_arg(labels_path));
    let out = require!(out_arg(out));
    match load_idx(std::path::Path::new(images), std::path::Path::new(labels)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(submfl_dataset { inner }));
            submfl_status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Deterministic synthetic blob dataset.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_dataset_synthetic(
    samples: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
    out: *mut *mut submfl_dataset,
) -> submfl_status {
    let out = require!(out_arg(out));
    match synthetic_blobs(samples, classes, dim, separation, seed) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(submfl_dataset { inner }));
            submfl_status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Sample count, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn submfl_dataset_len(dataset: *const submfl_dataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.len()
}

/// # Safety
/// `dataset` must be a handle from this library, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn submfl_dataset_free(dataset: *mut submfl_dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Mean loss and argmax accuracy of a model on a dataset.
///
/// # Safety
/// All handles must be live; the two output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn submfl_model_evaluate(
    model: *const submfl_model,
    dataset: *const submfl_dataset,
    out_loss: *mut f64,
    out_accuracy: *mut f64,
) -> submfl_status {
    if model.is_null() || dataset.is_null() {
        set_last_error("null handle");
        return submfl_status::NullPointer;
    }
    let out_loss = require!(out_arg(out_loss));
    let out_accuracy = require!(out_arg(out_accuracy));
    match evaluate(&(*model).params, &(*dataset).inner) {
        Ok((loss, accuracy)) => {
            *out_loss = loss;
            *out_accuracy = accuracy;
            submfl_status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Generate the nine-submodel cascade from a model.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_generate(
    model: *const submfl_model,
    mode: submfl_prune_mode,
    out: *mut *mut submfl_cascade,
) -> submfl_status {
    if model.is_null() {
        set_last_error("null model handle");
        return submfl_status::NullPointer;
    }
    let out = require!(out_arg(out));
    match generate_submodels(&(*model).params, mode.into()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(submfl_cascade {
                inner,
                provenance: (*model).provenance.clone(),
            }));
            submfl_status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of submodels in the cascade (9), or 0 for a null handle.
///
/// # Safety
/// `cascade` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_len(cascade: *const submfl_cascade) -> usize {
    if cascade.is_null() {
        return 0;
    }
    (*cascade).inner.len()
}

/// Pruning threshold of submodel `index`.
///
/// # Safety
/// `cascade` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_threshold(
    cascade: *const submfl_cascade,
    index: usize,
    out: *mut f64,
) -> submfl_status {
    with_submodel(cascade, index, out, |sm| sm.threshold)
}

/// Global sparsity percentage of submodel `index`.
///
/// # Safety
/// `cascade` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_global_sparsity(
    cascade: *const submfl_cascade,
    index: usize,
    out: *mut f64,
) -> submfl_status {
    with_submodel(cascade, index, out, |sm| sm.global_sparsity)
}

unsafe fn with_submodel(
    cascade: *const submfl_cascade,
    index: usize,
    out: *mut f64,
    get: impl Fn(&submfl::pruning::SubModel) -> f64,
) -> submfl_status {
    if cascade.is_null() {
        set_last_error("null cascade handle");
        return submfl_status::NullPointer;
    }
    let out = match out_arg(out) {
        Ok(v) => v,
        Err(status) => return status,
    };
    let cascade = &(*cascade).inner;
    if index >= cascade.len() {
        set_last_error(format!(
            "submodel index {index} out of range (len {})",
            cascade.len()
        ));
        return submfl_status::InvalidArgument;
    }
    *out = get(cascade.get(index));
    submfl_status::Ok
}

/// Copy submodel `index` out of the cascade as a standalone model handle.
///
/// # Safety
/// `cascade` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_model(
    cascade: *const submfl_cascade,
    index: usize,
    out: *mut *mut submfl_model,
) -> submfl_status {
    if cascade.is_null() {
        set_last_error("null cascade handle");
        return submfl_status::NullPointer;
    }
    let out = require!(out_arg(out));
    let handle = &*cascade;
    if index >= handle.inner.len() {
        set_last_error(format!(
            "submodel index {index} out of range (len {})",
            handle.inner.len()
        ));
        return submfl_status::InvalidArgument;
    }
    let sm = handle.inner.get(index);
    *out = Box::into_raw(Box::new(submfl_model {
        params: sm.params.clone(),
        mask: Some(sm.mask.clone()),
        provenance: Provenance {
            config_hash: handle.provenance.config_hash.clone(),
            seed: handle.provenance.seed,
            stage: format!("prune_t{:.1}", sm.threshold),
        },
    }));
    submfl_status::Ok
}

/// # Safety
/// `cascade` must be a handle from this library, or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn submfl_cascade_free(cascade: *mut submfl_cascade) {
    if !cascade.is_null() {
        drop(Box::from_raw(cascade));
    }
}

/// Run the full experiment from a config file, writing metrics CSVs, the
/// summary, and per-stage checkpoints into the configured (or overridden)
/// output directory.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string; `out_dir` may be
/// null to keep the configured directory.
#[no_mangle]
pub unsafe extern "C" fn submfl_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> submfl_status {
    let config_path = require!(str_arg(config_path));
    let out_dir = if out_dir.is_null() {
        None
    } else {
        Some(require!(str_arg(out_dir)))
    };
    let mut config = match load_config(std::path::Path::new(config_path)) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    Overrides {
        out_dir: out_dir.map(PathBuf::from),
        ..Overrides::default()
    }
    .apply(&mut config);
    let output = match run_experiment(&config) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    match submfl::artifacts::write_run_artifacts(&config, &output) {
        Ok(_) => submfl_status::Ok,
        Err(e) => fail(e),
    }
}
