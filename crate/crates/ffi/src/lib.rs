//! C ABI for the touchsound classifier.
//!
//! Every function returns a [`TsStatus`]. On failure a message is available
//! from [`ts_last_error_message`] until the next call on the same thread.
//! Panics never cross the boundary; they surface as `TS_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use touchsound::features::BAND_COUNT;
use touchsound::model::{argmax, load_model, CnnModel};
use touchsound::{AudioClip, Error, SignalPipeline, TouchLabel};

/// Result of every exported call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    MalformedFile = 4,
    EmptyAfterTrim = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Opaque trained model.
pub struct TsModel {
    model: CnnModel,
}

/// Per-clip features of a preprocessed clip.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsFeatures {
    pub duration_s: f64,
    pub peak_amplitude: f64,
    pub rms: f64,
    pub dominant_frequency_hz: f64,
    pub spectral_centroid_hz: f64,
    /// 500-1k, 1k-2k, 2k-4k, 4k-8k, 8k-16k Hz fractions.
    pub band_energy: [f64; 5],
    /// Nonzero when the clip had no energy in any band.
    pub degenerate: u8,
}

const _: () = assert!(BAND_COUNT == 5);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TsStatus {
    match e {
        Error::Io { .. } => TsStatus::Io,
        Error::MalformedWav(_)
        | Error::UnsupportedFormat(_)
        | Error::BadMagic(_)
        | Error::VersionMismatch(_)
        | Error::SizeMismatch { .. }
        | Error::NonFiniteWeights => TsStatus::MalformedFile,
        Error::EmptyAfterTrim => TsStatus::EmptyAfterTrim,
        _ => TsStatus::InvalidArgument,
    }
}

fn fail(status: TsStatus, msg: &str) -> TsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), TsStatus>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TsStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(TsStatus::Internal, "internal panic"),
    }
}

fn check(r: touchsound::Result<()>) -> Result<(), TsStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

/// Builds a clip from caller memory.
///
/// # Safety
/// `samples` must point to `len` readable floats.
unsafe fn clip_from(samples: *const f32, len: usize, sample_rate_hz: u32) -> Result<AudioClip, TsStatus> {
    if samples.is_null() {
        return Err(fail(TsStatus::NullPointer, "samples is null"));
    }
    let data = std::slice::from_raw_parts(samples, len);
    if data.iter().any(|x| !x.is_finite()) {
        return Err(fail(TsStatus::InvalidArgument, "samples contain NaN or infinity"));
    }
    AudioClip::new(data.iter().map(|&x| f64::from(x)).collect(), sample_rate_hz)
        .map_err(|e| fail(status_of(&e), &e.to_string()))
}

fn default_pipeline(sample_rate_hz: u32) -> Result<SignalPipeline, TsStatus> {
    let p = SignalPipeline::default();
    check(p.validate(sample_rate_hz))?;
    Ok(p)
}

/// Loads a model file. On success `*out` owns a model freed by [`ts_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_model_load(path: *const c_char, out: *mut *mut TsModel) -> TsStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(fail(TsStatus::NullPointer, "path or out is null"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(TsStatus::InvalidArgument, "path is not UTF-8"))?;
        let model = load_model(path).map_err(|e| fail(status_of(&e), &e.to_string()))?;
        *out = Box::into_raw(Box::new(TsModel { model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`ts_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(model: *mut TsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_model_num_classes(model: *const TsModel) -> u32 {
    model.as_ref().map_or(0, |m| m.model.classes() as u32)
}

/// Preprocesses and classifies raw mono samples.
///
/// `probs_out` receives one probability per class and must hold at least
/// [`ts_model_num_classes`] values. `label_out` receives the winning index.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ts_classify(
    model: *const TsModel,
    samples: *const f32,
    len: usize,
    sample_rate_hz: u32,
    probs_out: *mut f64,
    probs_len: usize,
    label_out: *mut u32,
) -> TsStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return Err(fail(TsStatus::NullPointer, "model is null"));
        };
        if probs_out.is_null() || label_out.is_null() {
            return Err(fail(TsStatus::NullPointer, "output pointer is null"));
        }
        let k = model.model.classes();
        if probs_len < k {
            return Err(fail(TsStatus::BufferTooSmall, &format!("need {k} probabilities")));
        }
        let clip = clip_from(samples, len, sample_rate_hz)?;
        let pipeline = default_pipeline(sample_rate_hz)?;
        let spec = pipeline
            .spectrogram(&clip)
            .map_err(|e| fail(status_of(&e), &e.to_string()))?;
        let probs = model
            .model
            .forward(&spec)
            .map_err(|e| fail(status_of(&e), &e.to_string()))?;
        std::slice::from_raw_parts_mut(probs_out, k).copy_from_slice(&probs);
        *label_out = argmax(&probs) as u32;
        Ok(())
    })
}

/// Runs DC removal, trimming, high-pass filtering and peak normalization.
///
/// `*out_len` is always set to the processed length. When `out_capacity`
/// is smaller the call returns `TS_STATUS_BUFFER_TOO_SMALL` and writes
/// nothing; pass a null `out` to query the length.
///
/// # Safety
/// `samples` must hold `len` floats, `out` must hold `out_capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn ts_preprocess(
    samples: *const f32,
    len: usize,
    sample_rate_hz: u32,
    out: *mut f32,
    out_capacity: usize,
    out_len: *mut usize,
) -> TsStatus {
    guard(|| {
        if out_len.is_null() {
            return Err(fail(TsStatus::NullPointer, "out_len is null"));
        }
        let clip = clip_from(samples, len, sample_rate_hz)?;
        let processed = default_pipeline(sample_rate_hz)?
            .preprocess(&clip)
            .map_err(|e| fail(status_of(&e), &e.to_string()))?;
        let n = processed.len();
        *out_len = n;
        if out.is_null() || out_capacity < n {
            return Err(fail(TsStatus::BufferTooSmall, &format!("need {n} samples")));
        }
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, s) in dst.iter_mut().zip(processed.samples()) {
            *d = *s as f32;
        }
        Ok(())
    })
}

/// Extracts features of the preprocessed clip.
///
/// # Safety
/// `samples` must hold `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_extract_features(
    samples: *const f32,
    len: usize,
    sample_rate_hz: u32,
    out: *mut TsFeatures,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(TsStatus::NullPointer, "out is null"));
        }
        let clip = clip_from(samples, len, sample_rate_hz)?;
        let f = default_pipeline(sample_rate_hz)?
            .features(&clip)
            .map_err(|e| fail(status_of(&e), &e.to_string()))?;
        *out = TsFeatures {
            duration_s: f.duration_s,
            peak_amplitude: f.peak_amplitude,
            rms: f.rms,
            dominant_frequency_hz: f.dominant_frequency_hz,
            spectral_centroid_hz: f.spectral_centroid_hz,
            band_energy: f.band_energy,
            degenerate: u8::from(f.degenerate),
        };
        Ok(())
    })
}

/// Static name of a 6-way label index, or null when out of range.
#[no_mangle]
pub extern "C" fn ts_label_name(index: u32) -> *const c_char {
    const NAMES: [&CStr; TouchLabel::COUNT] = [c"Knock", c"Tap", c"Rub", c"Stroke", c"Scratch", c"Press"];
    NAMES.get(index as usize).map_or(std::ptr::null(), |n| n.as_ptr())
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"",
    };
    VERSION.as_ptr()
}
