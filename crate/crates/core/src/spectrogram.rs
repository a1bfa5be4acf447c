//! Short-time Fourier magnitudes, log scaling and fixed-size shaping.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// Dense row-major 2-D grid. Rows are frequency, columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV dump, one line per row (low frequency first), comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    /// `(frequency rows, time frames)` of the shaped spectrogram.
    pub target_shape: (usize, usize),
    pub floor_db: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_size: 1024,
            hop: 256,
            target_shape: (64, 64),
            floor_db: -80.0,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !self.window_size.is_power_of_two() || self.window_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "window size {} is not a power of two",
                self.window_size
            )));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::InvalidConfig(format!(
                "hop {} outside 1..={}",
                self.hop, self.window_size
            )));
        }
        let (rows, cols) = self.target_shape;
        if rows == 0 || cols == 0 || rows > self.bins() {
            return Err(Error::InvalidConfig(format!(
                "target shape {rows}x{cols} incompatible with {} bins",
                self.bins()
            )));
        }
        if !(self.floor_db < 0.0) {
            return Err(Error::InvalidConfig("floor_db must be negative".into()));
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Number of frames for `n` samples; clips shorter than a window are
/// zero-padded to one frame.
pub fn frame_count(n: usize, config: &StftConfig) -> usize {
    if n <= config.window_size {
        1
    } else {
        (n - config.window_size) / config.hop + 1
    }
}

/// Magnitude STFT of raw samples: `window_size / 2 + 1` rows, one column per
/// frame; frame `t` covers samples `[t * hop, t * hop + window_size)`.
pub fn stft_magnitude_samples(samples: &[f64], config: &StftConfig) -> Result<Grid> {
    config.validate()?;
    let w = config.window_size;
    let bins = config.bins();
    let frames = frame_count(samples.len(), config);
    let window = hann_window(w);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);

    let mut grid = Grid::filled(bins, frames, 0.0);
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    for t in 0..frames {
        let start = t * config.hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            let x = samples.get(start + n).copied().unwrap_or(0.0);
            *slot = Complex::new(x * window[n], 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(bins).enumerate() {
            grid.set(k, t, v.norm());
        }
    }
    Ok(grid)
}

pub fn stft_magnitude(clip: &AudioClip, config: &StftConfig) -> Result<Grid> {
    stft_magnitude_samples(clip.samples(), config)
}

/// Energy of the full two-sided spectrum recovered from one-sided magnitudes:
/// DC and Nyquist bins count once, every other bin twice. By Parseval this
/// equals `window_size * sum((w[n] * x[n])^2)` for the frame.
pub fn one_sided_energy(magnitudes: &[f64]) -> f64 {
    let last = magnitudes.len() - 1;
    magnitudes
        .iter()
        .enumerate()
        .map(|(k, m)| if k == 0 || k == last { m * m } else { 2.0 * m * m })
        .sum()
}

/// Decibels relative to the grid maximum, clamped below at `floor_db`.
pub fn to_log(grid: &Grid, floor_db: f64) -> Result<Grid> {
    let max = grid.max();
    if !(max > 0.0) {
        return Err(Error::DegenerateAllZero);
    }
    let ref_db = 20.0 * max.log10();
    let data = grid
        .as_slice()
        .iter()
        .map(|&v| (20.0 * v.max(f64::MIN_POSITIVE).log10() - ref_db).max(floor_db))
        .collect();
    Ok(Grid {
        rows: grid.rows,
        cols: grid.cols,
        data,
    })
}

/// Averages contiguous row groups of `rows_in / rows_out` rows; leftover rows
/// fold into the last group.
pub fn bucket_rows(grid: &Grid, rows_out: usize) -> Result<Grid> {
    if rows_out == 0 || rows_out > grid.rows {
        return Err(Error::InvalidConfig(format!(
            "cannot bucket {} rows into {rows_out}",
            grid.rows
        )));
    }
    let size = grid.rows / rows_out;
    let mut out = Grid::filled(rows_out, grid.cols, 0.0);
    for b in 0..rows_out {
        let lo = b * size;
        let hi = if b + 1 == rows_out { grid.rows } else { lo + size };
        for c in 0..grid.cols {
            let sum: f64 = (lo..hi).map(|r| grid.get(r, c)).sum();
            out.set(b, c, sum / (hi - lo) as f64);
        }
    }
    Ok(out)
}

/// Buckets the frequency axis and center-crops or pads (with `floor_db`) the
/// time axis so the result is exactly `target_shape`.
pub fn fit_to_shape(grid: &Grid, target_shape: (usize, usize), floor_db: f64) -> Result<Grid> {
    let (rows_out, cols_out) = target_shape;
    if cols_out == 0 || grid.cols == 0 {
        return Err(Error::InvalidConfig("empty time axis".into()));
    }
    let bucketed = bucket_rows(grid, rows_out)?;
    let mut out = Grid::filled(rows_out, cols_out, floor_db);
    if bucketed.cols >= cols_out {
        let start = (bucketed.cols - cols_out) / 2;
        for r in 0..rows_out {
            for c in 0..cols_out {
                out.set(r, c, bucketed.get(r, start + c));
            }
        }
    } else {
        let pad_left = (cols_out - bucketed.cols) / 2;
        for r in 0..rows_out {
            for c in 0..bucketed.cols {
                out.set(r, pad_left + c, bucketed.get(r, c));
            }
        }
    }
    Ok(out)
}

/// Fixed-size log-magnitude spectrogram; the CNN input.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Grid,
    pub floor_db: f64,
    pub freq_resolution_hz: f64,
    pub hop_s: f64,
}

impl Spectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

pub fn compute_spectrogram(clip: &AudioClip, config: &StftConfig) -> Result<Spectrogram> {
    let raw = stft_magnitude(clip, config)?;
    let log = to_log(&raw, config.floor_db)?;
    let fs = f64::from(clip.sample_rate_hz());
    Ok(Spectrogram {
        values: fit_to_shape(&log, config.target_shape, config.floor_db)?,
        floor_db: config.floor_db,
        freq_resolution_hz: fs / config.window_size as f64,
        hop_s: config.hop as f64 / fs,
    })
}
