//! Synthetic touch sounds standing in for recorded robot-shell data.
//!
//! Each touch type gets an acoustic archetype: impulsive ringing (Knock,
//! Tap), enveloped band-limited friction noise (Rub, Stroke), a random train
//! of short bursts (Scratch) and a soft onset followed by a near-silent
//! sustain (Press). Target dominant frequencies are the measured class means
//! of the original recordings.
//!
//! Randomness comes from `ChaCha8Rng` seeded per clip, so output is
//! bit-reproducible for a given `(label, params, sample rate, seed)` within
//! this implementation.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::audio_io::{write_wav, AudioClip, BitDepth, DatasetManifest, ManifestEntry, TouchLabel};
use crate::error::{Error, Result};
use crate::preprocess::{filter_in_place, BiquadCoefficients};

/// Event peak amplitude at a relative level of 0 dB.
const REFERENCE_PEAK: f64 = 0.8;
/// Noise-only lead-in before every event, seconds.
const LEAD_IN_S: (f64, f64) = (0.02, 0.06);
/// Noise-only tail after frictional and sustained events, seconds.
const TAIL_S: f64 = 0.05;
/// Envelope decay of `ln(1000)` time constants, i.e. 60 dB.
const DECAY_60DB: f64 = 6.907_755_278_982_137;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// 2-4 damped partials near the center frequency plus a weak second
    /// harmonic. `decay_s` is the 60 dB decay time range.
    Impulsive { decay_s: (f64, f64) },
    /// Band-limited noise under a raised-cosine envelope, optionally
    /// amplitude-modulated at a rate drawn from `modulation_hz`.
    Frictional {
        modulation_hz: Option<(f64, f64)>,
        modulation_depth: f64,
    },
    /// Poisson train of short ringing bursts at `TouchRecipe::transient_rate_hz`.
    TransientTrain { burst_decay_s: (f64, f64), min_gap_s: f64 },
    /// A single damped onset followed by narrow-band sustain `sustain_db`
    /// below the onset peak.
    OnsetSustain { decay_s: f64, sustain_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchRecipe {
    /// Target dominant frequency.
    pub center_hz: f64,
    /// Clip duration range, seconds (lead-in and tail included).
    pub duration_s: (f64, f64),
    pub envelope: Envelope,
    /// Events per second; only used by transient trains.
    pub transient_rate_hz: f64,
    /// Event peak level relative to the loudest class.
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchSynthParams {
    pub recipes: [TouchRecipe; TouchLabel::COUNT],
    /// Background noise RMS relative to the RMS of the loudest 10 ms of the
    /// event.
    pub noise_floor_db: f64,
    /// Constant offset added to every sample, mimicking an uncalibrated ADC.
    pub dc_offset: f64,
}

impl Default for TouchSynthParams {
    fn default() -> Self {
        let impulsive = |center_hz, decay_s, level_db| TouchRecipe {
            center_hz,
            duration_s: (0.30, 0.36),
            envelope: Envelope::Impulsive { decay_s },
            transient_rate_hz: 0.0,
            level_db,
        };
        let frictional = |center_hz, duration_s, modulation_hz| TouchRecipe {
            center_hz,
            duration_s,
            envelope: Envelope::Frictional {
                modulation_hz,
                modulation_depth: 0.9,
            },
            transient_rate_hz: 0.0,
            level_db: -3.0,
        };
        Self {
            recipes: [
                impulsive(1938.0, (0.030, 0.060), 0.0),
                impulsive(1769.0, (0.010, 0.025), -6.0),
                frictional(1663.0, (0.6, 1.0), Some((8.0, 15.0))),
                frictional(1605.0, (1.0, 1.5), None),
                TouchRecipe {
                    center_hz: 1641.0,
                    duration_s: (0.8, 1.2),
                    envelope: Envelope::TransientTrain {
                        burst_decay_s: (0.015, 0.030),
                        min_gap_s: 0.015,
                    },
                    transient_rate_hz: 25.0,
                    level_db: -6.0,
                },
                TouchRecipe {
                    center_hz: 2269.0,
                    duration_s: (1.0, 1.4),
                    envelope: Envelope::OnsetSustain {
                        decay_s: 0.14,
                        sustain_db: -40.0,
                    },
                    transient_rate_hz: 0.0,
                    level_db: -20.0,
                },
            ],
            noise_floor_db: -50.0,
            dc_offset: 0.05,
        }
    }
}

impl TouchSynthParams {
    pub fn recipe(&self, label: TouchLabel) -> &TouchRecipe {
        &self.recipes[label.index()]
    }
}

/// splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th clip of `label` under `master_seed`.
pub fn clip_seed(master_seed: u64, label: TouchLabel, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(((label.index() as u64) << 32) | index as u64))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Constant-peak-gain bandpass biquad.
fn bandpass(center_hz: f64, q: f64, fs: f64) -> BiquadCoefficients {
    let w0 = 2.0 * PI * center_hz / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    BiquadCoefficients {
        b0: alpha / a0,
        b1: 0.0,
        b2: -alpha / a0,
        a1: -2.0 * w0.cos() / a0,
        a2: (1.0 - alpha) / a0,
    }
}

fn band_noise(rng: &mut ChaCha8Rng, len: usize, center_hz: f64, q: f64, fs: f64) -> Vec<f64> {
    // 100 ms of warm-up so the filter state is stationary
    let warm = fs as usize / 10;
    let mut noise: Vec<f64> = (0..len + warm).map(|_| gaussian(rng)).collect();
    filter_in_place(&mut noise, &[bandpass(center_hz, q, fs)]);
    let noise = noise.split_off(warm);
    let rms = (noise.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    noise.into_iter().map(|x| x / rms.max(1e-300)).collect()
}

fn add_ringing(out: &mut [f64], start: usize, amp: f64, freq: f64, tau_s: f64, phase: f64, fs: f64) {
    let len = ((tau_s * DECAY_60DB * 1.2) * fs) as usize;
    for (i, slot) in out.iter_mut().skip(start).take(len).enumerate() {
        let t = i as f64 / fs;
        *slot += amp * (-t / tau_s).exp() * (2.0 * PI * freq * t + phase).sin();
    }
}

/// Raised-cosine (Tukey) gain at position `i` of `len`, with `taper` samples
/// of ramp at each end.
fn tukey(i: usize, len: usize, taper: usize) -> f64 {
    let ramp = |k: usize| 0.5 - 0.5 * (PI * k as f64 / taper as f64).cos();
    if taper == 0 {
        1.0
    } else if i < taper {
        ramp(i)
    } else if i >= len - taper {
        ramp(len - 1 - i)
    } else {
        1.0
    }
}

fn scale_to_peak(signal: &mut [f64], peak: f64) {
    let current = signal.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if current > 0.0 {
        let g = peak / current;
        signal.iter_mut().for_each(|x| *x *= g);
    }
}

/// Largest RMS over windows of `window` samples, stepped by a quarter window.
fn loudest_rms(signal: &[f64], window: usize) -> f64 {
    let window = window.clamp(1, signal.len().max(1));
    let step = (window / 4).max(1);
    (0..=signal.len().saturating_sub(window))
        .step_by(step)
        .map(|start| signal[start..start + window].iter().map(|x| x * x).sum::<f64>() / window as f64)
        .fold(0.0, f64::max)
        .sqrt()
}

/// Generates one clip. Deterministic in all arguments.
pub fn synth_touch(
    label: TouchLabel,
    params: &TouchSynthParams,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<AudioClip> {
    let recipe = params.recipe(label);
    let fs = f64::from(sample_rate_hz);
    if !(recipe.center_hz > 0.0 && recipe.center_hz * 2.5 < fs / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "center {} Hz too high for {sample_rate_hz} Hz sampling",
            recipe.center_hz
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (uniform(&mut rng, recipe.duration_s) * fs).round() as usize;
    let lead = (uniform(&mut rng, LEAD_IN_S) * fs) as usize;
    let tail = (TAIL_S * fs) as usize;
    let peak = REFERENCE_PEAK * 10f64.powf(recipe.level_db / 20.0);
    let center = recipe.center_hz;

    let mut event = vec![0.0; len];
    match recipe.envelope {
        Envelope::Impulsive { decay_s } => {
            // modes excited by one impact start in phase
            let phase = rng.random_range(0.0..2.0 * PI);
            let partials = rng.random_range(2..=4);
            for p in 0..partials {
                let freq = center * (1.0 + rng.random_range(-0.1..0.1));
                let amp = if p == 0 { 1.0 } else { rng.random_range(0.3..0.7) };
                let tau = uniform(&mut rng, decay_s) / DECAY_60DB;
                add_ringing(&mut event, lead, amp, freq, tau, phase, fs);
                if p == 0 {
                    add_ringing(&mut event, lead, 0.15, 2.0 * freq, tau / 2.0, phase, fs);
                }
            }
        }
        Envelope::Frictional {
            modulation_hz,
            modulation_depth,
        } => {
            let span = len.saturating_sub(lead + tail).max(1);
            let noise = band_noise(&mut rng, span, center, 1.2, fs);
            let modulation = modulation_hz.map(|r| (uniform(&mut rng, r), rng.random_range(0.0..2.0 * PI)));
            let taper = span / 4;
            for (i, n) in noise.into_iter().enumerate() {
                let t = i as f64 / fs;
                let am = match modulation {
                    Some((rate, phase)) => {
                        (1.0 + modulation_depth * (2.0 * PI * rate * t + phase).sin())
                            / (1.0 + modulation_depth)
                    }
                    None => 1.0,
                };
                event[lead + i] = n * tukey(i, span, taper) * am;
            }
        }
        Envelope::TransientTrain {
            burst_decay_s,
            min_gap_s,
        } => {
            let mean_extra = (1.0 / recipe.transient_rate_hz - min_gap_s).max(1e-3);
            let gaps = Exp::new(1.0 / mean_extra).expect("positive rate");
            let end = len.saturating_sub(tail) as f64 / fs;
            let mut t = lead as f64 / fs;
            while t < end {
                let freq = center * (1.0 + rng.random_range(-0.05..0.05));
                let amp = rng.random_range(0.6..1.0);
                let tau = uniform(&mut rng, burst_decay_s) / DECAY_60DB;
                let phase = rng.random_range(0.0..2.0 * PI);
                add_ringing(&mut event, (t * fs) as usize, amp, freq, tau, phase, fs);
                t += min_gap_s + gaps.sample(&mut rng);
            }
        }
        Envelope::OnsetSustain { decay_s, sustain_db } => {
            let freq = center * (1.0 + rng.random_range(-0.03..0.03));
            let phase = rng.random_range(0.0..2.0 * PI);
            add_ringing(&mut event, lead, 1.0, freq, decay_s / DECAY_60DB, phase, fs);
            scale_to_peak(&mut event, 1.0);
            let span = len.saturating_sub(lead + tail).max(1);
            let hum = band_noise(&mut rng, span, freq, 8.0, fs);
            let level = 10f64.powf(sustain_db / 20.0);
            let fade = (0.05 * fs) as usize;
            for (i, h) in hum.into_iter().enumerate() {
                event[lead + i] += level * h * tukey(i, span, fade.min(span / 2));
            }
        }
    }
    scale_to_peak(&mut event, peak);

    let noise_rms = loudest_rms(&event, (0.01 * fs) as usize) * 10f64.powf(params.noise_floor_db / 20.0);
    let samples = event
        .into_iter()
        .map(|x| x + noise_rms * gaussian(&mut rng) + params.dc_offset)
        .collect();
    AudioClip::new(samples, sample_rate_hz)
}

/// Counts onsets that stand out from their surroundings: 5 ms frames whose
/// RMS is a local maximum, exceeds the RMS of the surrounding 50 ms by more
/// than 6 dB, and lies within 30 dB of the loudest frame. The clip mean is
/// removed first.
pub fn count_transients(clip: &AudioClip) -> usize {
    let fs = f64::from(clip.sample_rate_hz());
    let frame = ((0.005 * fs).round() as usize).max(1);
    let reach = ((0.025 * fs) / frame as f64).round() as usize;
    let mean = clip.samples().iter().sum::<f64>() / clip.len() as f64;
    let energy: Vec<f64> = clip
        .samples()
        .chunks(frame)
        .map(|f| f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f.len() as f64)
        .collect();
    let loudest = energy.iter().copied().fold(0.0, f64::max);
    if loudest == 0.0 {
        return 0;
    }
    let gate = loudest * 1e-3;
    (0..energy.len())
        .filter(|&i| {
            let e = energy[i];
            let left = i.checked_sub(1).map_or(0.0, |j| energy[j]);
            let right = energy.get(i + 1).copied().unwrap_or(0.0);
            if e < gate || e < left || e <= right {
                return false;
            }
            let lo = i.saturating_sub(reach);
            let hi = (i + reach + 1).min(energy.len());
            let neighborhood = energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            e > 4.0 * neighborhood
        })
        .count()
}

/// Writes `per_class` clips per label as 32-bit float WAV under
/// `out_dir/<label>/NNN.wav`, plus `out_dir/manifest.json`.
pub fn generate_dataset(
    per_class: usize,
    out_dir: impl AsRef<Path>,
    master_seed: u64,
    sample_rate_hz: u32,
    params: &TouchSynthParams,
) -> Result<DatasetManifest> {
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    let mut manifest = DatasetManifest::new(sample_rate_hz);
    for label in TouchLabel::ALL {
        let dir = out_dir.join(label.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let clip = synth_touch(label, params, sample_rate_hz, clip_seed(master_seed, label, i))?;
            let name = format!("{:03}.wav", i + 1);
            write_wav(&clip, dir.join(&name), BitDepth::Float32)?;
            manifest.entries.push(ManifestEntry {
                path: format!("{}/{name}", label.dir_name()),
                label,
                split: None,
            });
        }
    }
    crate::audio_io::save_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}
