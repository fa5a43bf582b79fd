//! C ABI over the condrnnt core.
//!
//! Fallible functions return a `CondrnntStatus`. On failure a description is
//! kept per thread and can be read with `condrnnt_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use condrnnt::losses::{ctc_loss, rnnt_loss, CtcLogPosteriors, RnntLogPosteriors};
use condrnnt::network::Model;
use condrnnt::numerics::{Tape, Tensor};
use condrnnt::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondrnntStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Infeasible = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Opaque handle to a loaded model.
pub struct CondrnntModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> CondrnntStatus {
    match e {
        Error::Io { .. } => CondrnntStatus::Io,
        Error::Checkpoint(_) | Error::FingerprintMismatch { .. } | Error::Parse { .. } => CondrnntStatus::Checkpoint,
        Error::Infeasible { .. } => CondrnntStatus::Infeasible,
        _ => CondrnntStatus::InvalidArgument,
    }
}

fn fail(status: CondrnntStatus, msg: impl Into<String>) -> CondrnntStatus {
    set_error(msg);
    status
}

/// Runs `body`, recording its error text and converting panics.
fn guard(body: impl FnOnce() -> Result<(), CondrnntStatus>) -> CondrnntStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            CondrnntStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(CondrnntStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: condrnnt::Result<T>) -> Result<T, CondrnntStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), CondrnntStatus> {
    if p.is_null() {
        Err(fail(CondrnntStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must point to `len` readable values when non-null.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], CondrnntStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn element_count(dims: &[usize]) -> Result<usize, CondrnntStatus> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(CondrnntStatus::InvalidArgument, format!("shape {dims:?} overflows")))
}

fn labels_of(labels: &[u32]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize).collect()
}

/// Text of the most recent error on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn condrnnt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model directory written by `condrnnt pretrain` or `finetune`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn condrnnt_model_load(dir: *const c_char, out: *mut *mut CondrnntModel) -> CondrnntStatus {
    guard(|| {
        non_null(dir, "dir")?;
        non_null(out, "out")?;
        let dir = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| fail(CondrnntStatus::InvalidArgument, "`dir` is not UTF-8"))?;
        let model = lift(condrnnt::cli::load_model_dir(Path::new(dir)))?;
        *out = Box::into_raw(Box::new(CondrnntModel { model }));
        Ok(())
    })
}

/// Releases a handle from `condrnnt_model_load`; null is ignored.
///
/// # Safety
/// `model` must come from `condrnnt_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn condrnnt_model_free(model: *mut CondrnntModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension the model expects.
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn condrnnt_model_input_dim(model: *const CondrnntModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().input_dim)
}

/// Number of output classes including blank (id 0).
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn condrnnt_model_output_dim(model: *const CondrnntModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().output_dim())
}

/// Beam-search decodes a row-major `frames x dim` feature matrix.
///
/// Writes at most `capacity` label ids to `labels_out` and the hypothesis
/// length to `len_out`. When the buffer is too small nothing is written to
/// `labels_out`, the buffer-too-small status is returned and `len_out` holds
/// the required length.
///
/// # Safety
/// Pointers must be valid for the given sizes; `score_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn condrnnt_decode(
    model: *const CondrnntModel,
    features: *const f64,
    frames: usize,
    dim: usize,
    beam: usize,
    labels_out: *mut u32,
    capacity: usize,
    len_out: *mut usize,
    score_out: *mut f64,
) -> CondrnntStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(len_out, "len_out")?;
        let model = &(*model).model;
        let data = slice(features, element_count(&[frames, dim])?, "features")?.to_vec();
        let x = lift(Tensor::new(vec![frames, dim], data))?;
        let hyp = lift(condrnnt::decoding::rnnt_decode(model, &x, beam))?;
        *len_out = hyp.labels.len();
        if !score_out.is_null() {
            *score_out = hyp.log_score;
        }
        if hyp.labels.len() > capacity {
            return Err(fail(
                CondrnntStatus::BufferTooSmall,
                format!("hypothesis has {} labels, buffer holds {capacity}", hyp.labels.len()),
            ));
        }
        if !hyp.labels.is_empty() {
            non_null(labels_out, "labels_out")?;
            let out = std::slice::from_raw_parts_mut(labels_out, hyp.labels.len());
            for (o, &l) in out.iter_mut().zip(hyp.labels.iter()) {
                *o = l as u32;
            }
        }
        Ok(())
    })
}

/// Shared tail of the two loss entry points.
unsafe fn loss_and_grad(
    logp: Tensor,
    labels: &[usize],
    rnnt: bool,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> Result<(), CondrnntStatus> {
    non_null(loss_out, "loss_out")?;
    let n = logp.numel();
    let mut tape = Tape::new();
    let v = tape.leaf(logp);
    let loss = if rnnt {
        lift(rnnt_loss(&mut tape, v, labels))?
    } else {
        lift(ctc_loss(&mut tape, v, labels))?
    };
    *loss_out = tape.value(loss).item();
    if !grad_out.is_null() {
        lift(tape.backward(loss))?;
        let g = tape.grad(v).ok_or_else(|| fail(CondrnntStatus::Internal, "missing gradient"))?;
        std::slice::from_raw_parts_mut(grad_out, n).copy_from_slice(g);
    }
    Ok(())
}

/// Negative log-likelihood of `labels` under row-major `frames x classes`
/// CTC log-posteriors (blank is class 0). When `grad_out` is non-null it
/// receives the gradient with respect to every log-posterior.
///
/// # Safety
/// Pointers must be valid for the given sizes.
#[no_mangle]
pub unsafe extern "C" fn condrnnt_ctc_loss(
    logp: *const f64,
    frames: usize,
    classes: usize,
    labels: *const u32,
    num_labels: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> CondrnntStatus {
    guard(|| {
        let data = slice(logp, element_count(&[frames, classes])?, "logp")?.to_vec();
        let y = labels_of(slice(labels, num_labels, "labels")?);
        let t = lift(Tensor::new(vec![frames, classes], data))?;
        let posteriors = lift(CtcLogPosteriors::new(t))?;
        loss_and_grad(posteriors.tensor().clone(), &y, false, loss_out, grad_out)
    })
}

/// Negative log-likelihood of `labels` under a row-major
/// `frames x (num_labels + 1) x classes` transducer lattice.
///
/// # Safety
/// Pointers must be valid for the given sizes.
#[no_mangle]
pub unsafe extern "C" fn condrnnt_rnnt_loss(
    logp: *const f64,
    frames: usize,
    classes: usize,
    labels: *const u32,
    num_labels: usize,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> CondrnntStatus {
    guard(|| {
        let shape = vec![frames, num_labels.saturating_add(1), classes];
        let data = slice(logp, element_count(&shape)?, "logp")?.to_vec();
        let y = labels_of(slice(labels, num_labels, "labels")?);
        let t = lift(Tensor::new(shape, data))?;
        let posteriors = lift(RnntLogPosteriors::new(t))?;
        loss_and_grad(posteriors.tensor().clone(), &y, true, loss_out, grad_out)
    })
}
