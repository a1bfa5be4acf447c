//! Reference implementations shared by the integration tests. These are
//! written independently of the library code they check.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use touchsound::model::{loss_and_gradients, Architecture, CnnModel};
use touchsound::preprocess::BiquadCoefficients;
use touchsound::spectrogram::{Grid, Spectrogram};
use touchsound::AudioClip;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// |H(e^{j2πf/fs})| of a biquad cascade in dB, by complex arithmetic.
pub fn cascade_gain_db(sections: &[BiquadCoefficients], f_hz: f64, fs_hz: f64) -> f64 {
    let z1 = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs_hz);
    let z2 = z1 * z1;
    let h = sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
        acc * (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
    });
    20.0 * h.norm().log10()
}

/// Magnitude of an ideal digital Butterworth high-pass obtained through the
/// bilinear transform with pre-warping, in dB.
pub fn butterworth_highpass_db(order: usize, cutoff_hz: f64, f_hz: f64, fs_hz: f64) -> f64 {
    let ratio = (PI * cutoff_hz / fs_hz).tan() / (PI * f_hz / fs_hz).tan();
    -10.0 * (1.0 + ratio.powi(2 * order as i32)).log10()
}

/// Moduli of the roots of z² + a1 z + a2.
pub fn pole_moduli(s: &BiquadCoefficients) -> [f64; 2] {
    let disc = Complex64::new(s.a1 * s.a1 - 4.0 * s.a2, 0.0).sqrt();
    [(-s.a1 + disc) / 2.0, (-s.a1 - disc) / 2.0].map(|r: Complex64| r.norm())
}

/// Direct evaluation of each section's difference equation, section by section.
pub fn recurrence_filter(sections: &[BiquadCoefficients], input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    for s in sections {
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            let xm = |k: usize| if n >= k { x[n - k] } else { 0.0 };
            let ym = |y: &[f64], k: usize| if n >= k { y[n - k] } else { 0.0 };
            y[n] = s.b0 * x[n] + s.b1 * xm(1) + s.b2 * xm(2) - s.a1 * ym(&y, 1) - s.a2 * ym(&y, 2);
        }
        x = y;
    }
    x
}

/// Mean by Neumaier compensated summation.
pub fn compensated_mean(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / xs.len() as f64
}

/// |X[k]|² for k in 0..N by the O(N²) definition.
pub fn dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                // Reduce the phase index modulo n to keep the angle small.
                let idx = (k * t) % n;
                acc += x * Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / n as f64);
            }
            acc.norm_sqr()
        })
        .collect()
}

/// Periodic Hann window written from its definition.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn sine(freq_hz: f64, amplitude: f64, seconds: f64, fs: u32) -> Vec<f64> {
    let n = (seconds * f64::from(fs)).round() as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / f64::from(fs)).sin())
        .collect()
}

pub fn clip(samples: Vec<f64>, fs: u32) -> AudioClip {
    AudioClip::new(samples, fs).unwrap()
}

/// Random test clip: offset, noise, a few bursts and silent stretches.
pub fn random_clip(rng: &mut ChaCha8Rng) -> AudioClip {
    let fs = [16_000, 22_050, 44_100, 48_000][rng.random_range(0..4)];
    let n = rng.random_range(64..6000);
    let offset = rng.random_range(-0.5..0.5);
    let noise = 10f64.powf(rng.random_range(-5.0..-1.0));
    let mut x: Vec<f64> = (0..n).map(|_| offset + noise * rng.random_range(-1.0..1.0)).collect();
    for _ in 0..rng.random_range(0..4) {
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..n.max(2));
        let amp = rng.random_range(0.01..3.0);
        let freq = rng.random_range(50.0..f64::from(fs) / 2.0);
        for (i, v) in x.iter_mut().skip(start).take(len).enumerate() {
            *v += amp * (2.0 * PI * freq * i as f64 / f64::from(fs)).sin();
        }
    }
    AudioClip::new(x, fs).unwrap()
}

/// Spectrogram whose grid holds uniform random dB values in [floor, 0].
pub fn random_spectrogram(rng: &mut ChaCha8Rng, side: usize, floor_db: f64) -> Spectrogram {
    let data = (0..side * side).map(|_| rng.random_range(floor_db..0.0)).collect();
    Spectrogram {
        values: Grid::from_vec(side, side, data).unwrap(),
        floor_db,
        freq_resolution_hz: 1.0,
        hop_s: 1.0,
    }
}

/// The reduced network used for gradient checks.
pub fn tiny_architecture(classes: usize) -> Architecture {
    Architecture {
        input_side: 8,
        conv1_filters: 2,
        conv2_filters: 2,
        hidden: 8,
        classes,
    }
}

pub struct GradientCheck {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Central differences of the batch loss for every parameter, compared
/// with backpropagation.
///
/// Weights are stored as f32, so the step actually taken is the f32
/// difference of the two perturbed values, which is what divides the loss
/// difference. Gradients smaller than `abs_floor` are compared absolutely.
pub fn gradient_check(model: &CnnModel, batch: &[(Spectrogram, usize)], step: f64, abs_floor: f64) -> GradientCheck {
    let (_, analytic) = loss_and_gradients(model, batch).unwrap();
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..model.parameters().len() {
        let w = model.parameters()[i];
        let hi = (f64::from(w) + step) as f32;
        let lo = (f64::from(w) - step) as f32;
        probe.parameters_mut()[i] = hi;
        let up = loss_and_gradients(&probe, batch).unwrap().0;
        probe.parameters_mut()[i] = lo;
        let down = loss_and_gradients(&probe, batch).unwrap().0;
        probe.parameters_mut()[i] = w;
        let numeric = (up - down) / (f64::from(hi) - f64::from(lo));
        let exact = analytic.0[i];
        let err = (numeric - exact).abs() / exact.abs().max(numeric.abs()).max(abs_floor);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    GradientCheck {
        parameters: model.parameters().len(),
        max_relative_error: worst.0,
        worst_index: worst.1,
    }
}

/// Random K×K confusion counts, at most `max_count` per cell.
pub fn random_counts(rng: &mut ChaCha8Rng, k: usize, max_count: u64) -> Vec<Vec<u64>> {
    (0..k)
        .map(|_| (0..k).map(|_| rng.random_range(0..=max_count)).collect())
        .collect()
}

/// Random surjective assignment of `k` classes onto `0..g` groups.
pub fn random_assignment(rng: &mut ChaCha8Rng, k: usize) -> (Vec<usize>, usize) {
    let g = rng.random_range(1..=k);
    let mut assignment: Vec<usize> = (0..k).map(|i| if i < g { i } else { rng.random_range(0..g) }).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        assignment.swap(i, j);
    }
    (assignment, g)
}
