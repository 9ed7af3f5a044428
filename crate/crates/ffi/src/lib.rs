//! C interface: label-target helpers, augmentation policies and inference
//! with trained checkpoints.
//!
//! Every function returns an [`RmxStatus`]. On failure a message is kept
//! per thread and can be read with [`rmx_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use remixmatch::ctaugment::{match_score, AugmentPolicy, SampledAugmentation};
use remixmatch::imaging::ImageTensor;
use remixmatch::model::predict;
use remixmatch::pipeline::{align, kl_divergence, sharpen, ProbVector};
use remixmatch::runner::Checkpoint;
use remixmatch::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RmxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Load = 5,
    Checkpoint = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub struct RmxPolicy(AugmentPolicy);

pub struct RmxAugmentation(SampledAugmentation);

pub struct RmxModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(RmxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => RmxStatus::Config,
            Error::Contract(_) => RmxStatus::InvalidArgument,
            Error::Load(_) => RmxStatus::Load,
            Error::Checkpoint(_) => RmxStatus::Checkpoint,
            Error::Io(_) => RmxStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RmxStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RmxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RmxStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RmxStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts(p, n) })
}

unsafe fn output<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts_mut(p, n) })
}

fn prob(v: &[f64]) -> Result<ProbVector, Failure> {
    Ok(ProbVector::new(v.to_vec())?)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rmx_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// `out = Normalize(q^(1/temperature))` over `n` classes.
///
/// # Safety
/// `q` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rmx_sharpen(q: *const f64, n: usize, temperature: f64, out: *mut f64) -> RmxStatus {
    guard(|| {
        let q = prob(unsafe { input(q, n, "q")? })?;
        let out = unsafe { output(out, n, "out")? };
        out.copy_from_slice(sharpen(&q, temperature)?.as_slice());
        Ok(())
    })
}

/// `out = Normalize(q * p_true / p_model)` over `n` classes.
///
/// # Safety
/// All pointers must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rmx_align(
    q: *const f64,
    p_true: *const f64,
    p_model: *const f64,
    n: usize,
    out: *mut f64,
) -> RmxStatus {
    guard(|| {
        let q = prob(unsafe { input(q, n, "q")? })?;
        let p = prob(unsafe { input(p_true, n, "p_true")? })?;
        let pt = prob(unsafe { input(p_model, n, "p_model")? })?;
        let out = unsafe { output(out, n, "out")? };
        out.copy_from_slice(align(&q, &p, &pt)?.as_slice());
        Ok(())
    })
}

/// `KL(p || q)` in nats.
///
/// # Safety
/// `p` and `q` must point to `n` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn rmx_kl(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> RmxStatus {
    guard(|| {
        let p = prob(unsafe { input(p, n, "p")? })?;
        let q = prob(unsafe { input(q, n, "q")? })?;
        let out = unsafe { output(out, 1, "out")? };
        out[0] = kl_divergence(&p, &q)?;
        Ok(())
    })
}

/// Agreement `1 - |prediction - label|_1 / (2n)`.
///
/// # Safety
/// `prediction` and `label` must point to `n` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn rmx_match_score(
    prediction: *const f64,
    label: *const f64,
    n: usize,
    out: *mut f64,
) -> RmxStatus {
    guard(|| {
        let p = prob(unsafe { input(prediction, n, "prediction")? })?;
        let l = prob(unsafe { input(label, n, "label")? })?;
        let out = unsafe { output(out, 1, "out")? };
        out[0] = match_score(&p, &l)?;
        Ok(())
    })
}

/// Creates a policy with every bin weight at 1.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn rmx_policy_new(rho: f64, threshold: f64, depth: usize, out: *mut *mut RmxPolicy) -> RmxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = AugmentPolicy::new(rho, threshold, depth)?;
        unsafe { *out = Box::into_raw(Box::new(RmxPolicy(policy))) };
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from [`rmx_policy_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rmx_policy_free(policy: *mut RmxPolicy) {
    if !policy.is_null() {
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// Copies the bin weights of parameter `param` of transformation `kind`
/// (an index into the fixed transformation list) into `out`, writing the
/// bin count to `bins`.
///
/// # Safety
/// `policy` must be a live handle, `out` must point to `len` doubles and
/// `bins` to one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn rmx_policy_weights(
    policy: *const RmxPolicy,
    kind: usize,
    param: usize,
    out: *mut f64,
    len: usize,
    bins: *mut usize,
) -> RmxStatus {
    guard(|| {
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let bins = unsafe { bins.as_mut() }.ok_or_else(|| null("bins"))?;
        let (_, _, w) = policy
            .0
            .tables()
            .filter(|(k, _, _)| k.index() == kind)
            .nth(param)
            .ok_or_else(|| Failure(RmxStatus::InvalidArgument, format!("no table for kind {kind} parameter {param}")))?;
        *bins = w.len();
        if len < w.len() {
            return Err(Failure(RmxStatus::BufferTooSmall, format!("need {} doubles", w.len())));
        }
        unsafe { output(out, w.len(), "out")? }.copy_from_slice(w);
        Ok(())
    })
}

/// Samples an augmentation: thresholded weights when `for_update` is 0,
/// uniform bins otherwise.
///
/// # Safety
/// `policy` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn rmx_policy_sample(
    policy: *const RmxPolicy,
    seed: u64,
    for_update: i32,
    out: *mut *mut RmxAugmentation,
) -> RmxStatus {
    guard(|| {
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aug = if for_update != 0 {
            policy.0.sample_for_update(&mut rng)
        } else {
            policy.0.sample_for_training(&mut rng)
        };
        unsafe { *out = Box::into_raw(Box::new(RmxAugmentation(aug))) };
        Ok(())
    })
}

/// Moves the weights of the bins used by `aug` toward `omega`.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn rmx_policy_update(policy: *mut RmxPolicy, aug: *const RmxAugmentation, omega: f64) -> RmxStatus {
    guard(|| {
        let policy = unsafe { policy.as_mut() }.ok_or_else(|| null("policy"))?;
        let aug = unsafe { aug.as_ref() }.ok_or_else(|| null("aug"))?;
        policy.0.update_weights(&aug.0.handles, omega)?;
        Ok(())
    })
}

/// Applies `aug` to a row-major, channel-last float image in `[0, 1]`.
///
/// # Safety
/// `aug` must be live; `pixels` and `out` must point to
/// `height * width * channels` floats.
#[no_mangle]
pub unsafe extern "C" fn rmx_augmentation_apply(
    aug: *const RmxAugmentation,
    pixels: *const f32,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
    out: *mut f32,
) -> RmxStatus {
    guard(|| {
        let aug = unsafe { aug.as_ref() }.ok_or_else(|| null("aug"))?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let n = height * width * channels;
        let data = unsafe { slice::from_raw_parts(pixels, n) }.to_vec();
        let img = ImageTensor::new(height, width, channels, data)?;
        let result = aug.0.apply(&img, &mut ChaCha8Rng::seed_from_u64(seed));
        unsafe { output(out, n, "out")? }.copy_from_slice(result.data());
        Ok(())
    })
}

/// # Safety
/// `aug` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmx_augmentation_free(aug: *mut RmxAugmentation) {
    if !aug.is_null() {
        drop(unsafe { Box::from_raw(aug) });
    }
}

/// Loads a training checkpoint for inference with its EMA weights.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn rmx_model_load(path: *const c_char, out: *mut *mut RmxModel) -> RmxStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Failure(RmxStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ckpt = Checkpoint::load(Path::new(path))?;
        unsafe { *out = Box::into_raw(Box::new(RmxModel(ckpt))) };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmx_model_free(model: *mut RmxModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Reports the expected input shape and the class count.
///
/// # Safety
/// `model` must be live and every output pointer valid.
#[no_mangle]
pub unsafe extern "C" fn rmx_model_shape(
    model: *const RmxModel,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
    classes: *mut usize,
) -> RmxStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let a = &m.0.arch;
        for (p, v) in [(height, a.height), (width, a.width), (channels, a.channels), (classes, a.classes)] {
            *unsafe { p.as_mut() }.ok_or_else(|| null("shape output"))? = v;
        }
        Ok(())
    })
}

/// Class probabilities for `count` images laid out back to back, each in
/// the model's input shape. Writes `count * classes` doubles.
///
/// # Safety
/// `model` must be live; `pixels` must hold `count` images and `out`
/// `count * classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn rmx_model_predict(
    model: *const RmxModel,
    pixels: *const f32,
    count: usize,
    out: *mut f64,
) -> RmxStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let a = &m.0.arch;
        let size = a.height * a.width * a.channels;
        let raw = unsafe { slice::from_raw_parts(pixels, size * count) };
        let images = raw
            .chunks_exact(size)
            .map(|px| ImageTensor::new(a.height, a.width, a.channels, px.to_vec()))
            .collect::<remixmatch::Result<Vec<_>>>()?;
        let probs = predict(a, &m.0.optimizer.ema, &images)?;
        let out = unsafe { output(out, count * a.classes, "out")? };
        for (dst, p) in out.chunks_exact_mut(a.classes).zip(&probs) {
            dst.copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}
