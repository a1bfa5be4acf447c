//! Signal conditioning: DC removal, silence trimming, Butterworth high-pass
//! filtering and peak normalization, applied in that order.

use std::f64::consts::PI;

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// High-pass filter design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    /// Butterworth order; one of 2, 4 or 8.
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: 1000.0,
            order: 4,
        }
    }
}

impl FilterSpec {
    pub const SUPPORTED_ORDERS: [usize; 3] = [2, 4, 8];

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if !Self::SUPPORTED_ORDERS.contains(&self.order) {
            return Err(Error::InvalidConfig(format!(
                "filter order {} not in {:?}",
                self.order,
                Self::SUPPORTED_ORDERS
            )));
        }
        let nyquist_hz = f64::from(sample_rate_hz) / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist_hz) {
            return Err(Error::InvalidCutoff {
                cutoff_hz: self.cutoff_hz,
                nyquist_hz,
            });
        }
        Ok(())
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoefficients {
    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

/// Butterworth high-pass as a cascade of `order / 2` biquads.
///
/// Each section is the bilinear transform of one conjugate pole pair of the
/// analog prototype, pre-warped so the cascade is exactly -3.01 dB at the
/// cutoff.
pub fn design_highpass(spec: &FilterSpec, sample_rate_hz: u32) -> Result<Vec<BiquadCoefficients>> {
    spec.validate(sample_rate_hz)?;
    let w0 = 2.0 * PI * spec.cutoff_hz / f64::from(sample_rate_hz);
    let (sin_w0, cos_w0) = w0.sin_cos();
    let n = spec.order as f64;

    Ok((0..spec.order / 2)
        .map(|k| {
            // pole pair angle measured from the negative real axis
            let theta = PI * (2 * k + 1) as f64 / (2.0 * n);
            let q = 1.0 / (2.0 * theta.cos());
            let alpha = sin_w0 / (2.0 * q);
            let a0 = 1.0 + alpha;
            BiquadCoefficients {
                b0: (1.0 + cos_w0) / 2.0 / a0,
                b1: -(1.0 + cos_w0) / a0,
                b2: (1.0 + cos_w0) / 2.0 / a0,
                a1: -2.0 * cos_w0 / a0,
                a2: (1.0 - alpha) / a0,
            }
        })
        .collect())
}

/// Runs the cascade over the clip with zero initial state (direct form II
/// transposed).
pub fn apply_filter(clip: &AudioClip, sections: &[BiquadCoefficients]) -> AudioClip {
    let mut out = clip.samples().to_vec();
    filter_in_place(&mut out, sections);
    clip.with_samples(out)
}

pub(crate) fn filter_in_place(samples: &mut [f64], sections: &[BiquadCoefficients]) {
    for c in sections {
        let (mut s1, mut s2) = (0.0, 0.0);
        for x in samples.iter_mut() {
            let input = *x;
            let y = c.b0 * input + s1;
            s1 = c.b1 * input - c.a1 * y + s2;
            s2 = c.b2 * input - c.a2 * y;
            *x = y;
        }
    }
}

/// Subtracts the mean.
pub fn remove_dc(clip: &AudioClip) -> AudioClip {
    let n = clip.len() as f64;
    let mean = clip.samples().iter().sum::<f64>() / n;
    clip.with_samples(clip.samples().iter().map(|x| x - mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    pub frame_ms: f64,
    /// Gate level relative to the loudest frame's RMS; must be negative.
    pub threshold_db: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            frame_ms: 10.0,
            threshold_db: -40.0,
        }
    }
}

impl TrimConfig {
    pub fn frame_len(&self, sample_rate_hz: u32) -> Result<usize> {
        let len = (self.frame_ms * f64::from(sample_rate_hz) / 1000.0).round();
        if !(len >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "trim frame of {} ms holds no samples",
                self.frame_ms
            )));
        }
        if !(self.threshold_db < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "trim threshold {} dB must be negative",
                self.threshold_db
            )));
        }
        Ok(len as usize)
    }
}

/// Sample range `[start, end)` kept by [`trim_silence`].
pub fn trim_bounds(clip: &AudioClip, config: &TrimConfig) -> Result<(usize, usize)> {
    let frame_len = config.frame_len(clip.sample_rate_hz())?;
    let rms: Vec<f64> = clip
        .samples()
        .chunks(frame_len)
        .map(|f| (f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::EmptyAfterTrim);
    }
    let gate = peak * 10f64.powf(config.threshold_db / 20.0);
    let first = rms.iter().position(|&r| r > gate).ok_or(Error::EmptyAfterTrim)?;
    let last = rms.iter().rposition(|&r| r > gate).ok_or(Error::EmptyAfterTrim)?;
    Ok((first * frame_len, ((last + 1) * frame_len).min(clip.len())))
}

/// Keeps the span from the first to the last frame whose RMS clears the gate.
pub fn trim_silence(clip: &AudioClip, config: &TrimConfig) -> Result<AudioClip> {
    let (start, end) = trim_bounds(clip, config)?;
    Ok(clip.with_samples(clip.samples()[start..end].to_vec()))
}

/// Divides by the peak magnitude. Returns the clip and whether it was
/// degenerate (all zero, returned unchanged).
pub fn normalize_peak(clip: &AudioClip) -> (AudioClip, bool) {
    let peak = clip.peak();
    if peak == 0.0 {
        return (clip.clone(), true);
    }
    (
        clip.with_samples(clip.samples().iter().map(|x| x / peak).collect()),
        false,
    )
}

/// The full conditioning chain: DC removal, trim, high-pass, normalization.
pub fn preprocess_pipeline(
    clip: &AudioClip,
    filter: &FilterSpec,
    trim: &TrimConfig,
) -> Result<AudioClip> {
    let sections = design_highpass(filter, clip.sample_rate_hz())?;
    let centered = remove_dc(clip);
    let trimmed = trim_silence(&centered, trim)?;
    let filtered = apply_filter(&trimmed, &sections);
    Ok(normalize_peak(&filtered).0)
}
