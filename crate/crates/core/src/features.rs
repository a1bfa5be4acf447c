//! Handcrafted per-clip descriptors and per-class dominant-frequency
//! statistics.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio_io::{AudioClip, TouchLabel};
use crate::error::{Error, Result};
use crate::spectrogram::{stft_magnitude, StftConfig};

/// A frequency band `[low_hz, high_hz)`, or `[low_hz, high_hz]` when
/// `include_high` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    pub low_hz: f64,
    pub high_hz: f64,
    pub include_high: bool,
}

impl FrequencyBand {
    pub const fn half_open(low_hz: f64, high_hz: f64) -> Self {
        Self {
            low_hz,
            high_hz,
            include_high: false,
        }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.low_hz && (f < self.high_hz || (self.include_high && f == self.high_hz))
    }

    fn overlaps(&self, other: &FrequencyBand) -> bool {
        self.low_hz < other.high_hz && other.low_hz < self.high_hz
    }
}

pub const BAND_COUNT: usize = 5;

/// Octave-ish bands covering 500 Hz to 16 kHz.
pub const DEFAULT_BANDS: [FrequencyBand; BAND_COUNT] = [
    FrequencyBand::half_open(500.0, 1000.0),
    FrequencyBand::half_open(1000.0, 2000.0),
    FrequencyBand::half_open(2000.0, 4000.0),
    FrequencyBand::half_open(4000.0, 8000.0),
    FrequencyBand {
        low_hz: 8000.0,
        high_hz: 16000.0,
        include_high: true,
    },
];

/// One-sided magnitude spectrum with uniform bin spacing starting at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_hz: f64,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// Bin-center frequency of the largest magnitude (first one on ties).
    pub fn dominant_frequency_hz(&self) -> f64 {
        let mut best = 0;
        for (k, &m) in self.magnitudes.iter().enumerate() {
            if m > self.magnitudes[best] {
                best = k;
            }
        }
        self.frequency(best)
    }

    /// Magnitude-weighted mean frequency; 0 for an all-zero spectrum.
    pub fn centroid_hz(&self) -> f64 {
        let total: f64 = self.magnitudes.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.magnitudes
            .iter()
            .enumerate()
            .map(|(k, m)| self.frequency(k) * m)
            .sum::<f64>()
            / total
    }
}

/// Frame-averaged STFT magnitude spectrum.
pub fn averaged_spectrum(clip: &AudioClip, config: &StftConfig) -> Result<Spectrum> {
    let grid = stft_magnitude(clip, config)?;
    let frames = grid.cols() as f64;
    Ok(Spectrum {
        bin_hz: f64::from(clip.sample_rate_hz()) / config.window_size as f64,
        magnitudes: (0..grid.rows())
            .map(|r| grid.row(r).iter().sum::<f64>() / frames)
            .collect(),
    })
}

/// Magnitude of the whole-clip DFT (rectangular window), bins `0..=N/2`.
pub fn whole_clip_spectrum(clip: &AudioClip) -> Spectrum {
    let n = clip.len();
    let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    Spectrum {
        bin_hz: f64::from(clip.sample_rate_hz()) / n as f64,
        magnitudes: buf[..n / 2 + 1].iter().map(|c| c.norm()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies {
    pub fractions: Vec<f64>,
    /// Set when the spectrum carries no energy inside any band.
    pub degenerate: bool,
}

/// Squared-magnitude energy per band, as a fraction of the total over all
/// listed bands. Bins are assigned by their center frequency.
pub fn band_energy_distribution(spectrum: &Spectrum, bands: &[FrequencyBand]) -> Result<BandEnergies> {
    for (i, a) in bands.iter().enumerate() {
        if !(a.low_hz < a.high_hz) {
            return Err(Error::InvalidConfig(format!("empty band {a:?}")));
        }
        if bands[i + 1..].iter().any(|b| a.overlaps(b)) {
            return Err(Error::InvalidConfig(format!("band {a:?} overlaps another")));
        }
    }
    let mut energy = vec![0.0; bands.len()];
    for (k, m) in spectrum.magnitudes.iter().enumerate() {
        let f = spectrum.frequency(k);
        if let Some(i) = bands.iter().position(|b| b.contains(f)) {
            energy[i] += m * m;
        }
    }
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return Ok(BandEnergies {
            fractions: energy,
            degenerate: true,
        });
    }
    Ok(BandEnergies {
        fractions: energy.into_iter().map(|e| e / total).collect(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub duration_s: f64,
    pub peak_amplitude: f64,
    pub rms: f64,
    pub dominant_frequency_hz: f64,
    pub spectral_centroid_hz: f64,
    pub band_energy: [f64; BAND_COUNT],
    /// All-zero clip, or no energy inside the analysis bands.
    pub degenerate: bool,
}

/// Descriptors of a preprocessed clip. Dominant frequency and centroid come
/// from the frame-averaged STFT spectrum; band fractions from the whole-clip
/// spectrum, whose finer resolution keeps tones near band edges in their band.
pub fn extract_features(clip: &AudioClip, config: &StftConfig) -> Result<FeatureVector> {
    let n = clip.len() as f64;
    let peak_amplitude = clip.peak();
    let rms = (clip.samples().iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let duration_s = clip.duration_s();

    if peak_amplitude == 0.0 {
        return Ok(FeatureVector {
            duration_s,
            peak_amplitude,
            rms,
            dominant_frequency_hz: 0.0,
            spectral_centroid_hz: 0.0,
            band_energy: [0.0; BAND_COUNT],
            degenerate: true,
        });
    }

    let averaged = averaged_spectrum(clip, config)?;
    let bands = band_energy_distribution(&whole_clip_spectrum(clip), &DEFAULT_BANDS)?;
    let mut band_energy = [0.0; BAND_COUNT];
    band_energy.copy_from_slice(&bands.fractions);

    Ok(FeatureVector {
        duration_s,
        peak_amplitude,
        rms,
        dominant_frequency_hz: averaged.dominant_frequency_hz(),
        spectral_centroid_hz: averaged.centroid_hz(),
        band_energy,
        degenerate: bands.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelFrequencyStats {
    pub mean_hz: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single sample.
    pub std_hz: f64,
    pub count: usize,
}

/// Dominant-frequency mean and spread per touch label. Labels with no
/// samples are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassFrequencyStats {
    pub per_label: [Option<LabelFrequencyStats>; TouchLabel::COUNT],
}

impl ClassFrequencyStats {
    pub fn get(&self, label: TouchLabel) -> Option<&LabelFrequencyStats> {
        self.per_label[label.index()].as_ref()
    }

    /// Table of `label, mean ± std, count`.
    pub fn render(&self) -> String {
        let mut out = format!("{:<8} {:>22} {:>6}\n", "Touch", "Dominant freq (Hz)", "n");
        for label in TouchLabel::ALL {
            match self.get(label) {
                Some(s) => out.push_str(&format!(
                    "{:<8} {:>22} {:>6}\n",
                    label.name(),
                    format!("{:.0} ± {:.0}", s.mean_hz, s.std_hz),
                    s.count
                )),
                None => out.push_str(&format!("{:<8} {:>22} {:>6}\n", label.name(), "-", 0)),
            }
        }
        out
    }
}

pub fn class_frequency_stats<I>(samples: I) -> ClassFrequencyStats
where
    I: IntoIterator<Item = (TouchLabel, f64)>,
{
    let mut buckets: [Vec<f64>; TouchLabel::COUNT] = Default::default();
    for (label, hz) in samples {
        buckets[label.index()].push(hz);
    }
    let mut stats = ClassFrequencyStats::default();
    for (slot, values) in stats.per_label.iter_mut().zip(&buckets) {
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        *slot = Some(LabelFrequencyStats {
            mean_hz: mean,
            std_hz: std,
            count: values.len(),
        });
    }
    stats
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let digits = digits.max(1) as i32;
    if exp < -4 || exp >= digits {
        let s = format!("{:.*e}", (digits - 1) as usize, x);
        let (mantissa, exponent) = s.split_once('e').expect("exponent present");
        format!("{}e{}", trim_zeros(mantissa), exponent)
    } else {
        let decimals = (digits - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const FEATURE_CSV_HEADER: [&str; 12] = [
    "path",
    "label",
    "duration_s",
    "peak",
    "rms",
    "dominant_hz",
    "centroid_hz",
    "band1",
    "band2",
    "band3",
    "band4",
    "band5",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub label: TouchLabel,
    pub features: FeatureVector,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_feature_csv(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(FEATURE_CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        let f = &row.features;
        let mut record = vec![row.path.clone(), row.label.name().to_string()];
        record.extend(
            [
                f.duration_s,
                f.peak_amplitude,
                f.rms,
                f.dominant_frequency_hz,
                f.spectral_centroid_hz,
            ]
            .iter()
            .chain(f.band_energy.iter())
            .map(|&v| format_significant(v, 6)),
        );
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(FEATURE_CSV_HEADER.iter().copied()) {
        return Err(Error::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let num = |col: usize| -> Result<f64> {
            record[col].parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("not a number: {:?}", &record[col]),
            })
        };
        let mut band_energy = [0.0; BAND_COUNT];
        for (b, slot) in band_energy.iter_mut().enumerate() {
            *slot = num(7 + b)?;
        }
        let features = FeatureVector {
            duration_s: num(2)?,
            peak_amplitude: num(3)?,
            rms: num(4)?,
            dominant_frequency_hz: num(5)?,
            spectral_centroid_hz: num(6)?,
            band_energy,
            degenerate: band_energy.iter().all(|&b| b == 0.0),
        };
        rows.push(FeatureRow {
            path: record[0].to_string(),
            label: record[1].parse()?,
            features,
        });
    }
    Ok(rows)
}
