//! WAV ingest/egress and labeled dataset manifests.
//!
//! Only two sample encodings are accepted: 16-bit signed PCM and 32-bit IEEE
//! float, mono or stereo. Stereo is folded to mono by averaging the two
//! channels sample by sample.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 44_100;

/// Largest sample value representable in 16-bit PCM after scaling by 1/32768.
pub const PCM16_MAX: f64 = 1.0 - 1.0 / 32768.0;

/// A mono sample sequence with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    pub const MIN_SAMPLE_RATE_HZ: u32 = 8_000;

    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidClip("clip has no samples".into()));
        }
        if sample_rate_hz < Self::MIN_SAMPLE_RATE_HZ {
            return Err(Error::InvalidClip(format!(
                "sample rate {sample_rate_hz} Hz is below {} Hz",
                Self::MIN_SAMPLE_RATE_HZ
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Same sample rate, new samples. Callers guarantee `samples` is non-empty.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Maximum absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// The six touch types, in their fixed ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TouchLabel {
    Knock,
    Tap,
    Rub,
    Stroke,
    Scratch,
    Press,
}

impl TouchLabel {
    pub const COUNT: usize = 6;

    pub const ALL: [TouchLabel; Self::COUNT] = [
        TouchLabel::Knock,
        TouchLabel::Tap,
        TouchLabel::Rub,
        TouchLabel::Stroke,
        TouchLabel::Scratch,
        TouchLabel::Press,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TouchLabel::Knock => "Knock",
            TouchLabel::Tap => "Tap",
            TouchLabel::Rub => "Rub",
            TouchLabel::Stroke => "Stroke",
            TouchLabel::Scratch => "Scratch",
            TouchLabel::Press => "Press",
        }
    }

    /// Lower-case directory name used by the dataset generator.
    pub fn dir_name(self) -> &'static str {
        match self {
            TouchLabel::Knock => "knock",
            TouchLabel::Tap => "tap",
            TouchLabel::Rub => "rub",
            TouchLabel::Stroke => "stroke",
            TouchLabel::Scratch => "scratch",
            TouchLabel::Press => "press",
        }
    }
}

impl fmt::Display for TouchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TouchLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "Train",
            Split::Test => "Test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub label: TouchLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub sample_rate_hz: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub const VERSION: u32 = 1;

    pub fn new(sample_rate_hz: u32) -> Self {
        Self {
            version: Self::VERSION,
            sample_rate_hz,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn has_splits(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.split.is_some())
    }

    pub fn count_per_label(&self) -> [usize; TouchLabel::COUNT] {
        let mut counts = [0; TouchLabel::COUNT];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }

    /// Resolves an entry path against the directory holding the manifest.
    pub fn resolve(base_dir: &Path, entry: &ManifestEntry) -> PathBuf {
        entry.path.split('/').fold(base_dir.to_path_buf(), |p, c| p.join(c))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(Error::ManifestVersion(self.version));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::DuplicatePath(e.path.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawManifest {
    version: u32,
    sample_rate_hz: u32,
    entries: Vec<RawEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    path: String,
    label: String,
    #[serde(default)]
    split: Option<Split>,
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let entries = raw
        .entries
        .into_iter()
        .map(|r| {
            Ok(ManifestEntry {
                label: r.label.parse()?,
                path: r.path,
                split: r.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: raw.version,
        sample_rate_hz: raw.sample_rate_hz,
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.validate()?;
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::MalformedWav(e.to_string()),
        hound::Error::FormatError(msg) => Error::MalformedWav(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        other => Error::MalformedWav(other.to_string()),
    }
}

/// Reads a WAV file as a mono clip.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(BufReader::new(file)).map_err(map_hound)?;
    let spec = reader.spec();

    if spec.channels != 1 && spec.channels != 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {format:?} samples"
            )))
        }
    };

    let samples = if spec.channels == 2 {
        if !interleaved.len().is_multiple_of(2) {
            return Err(Error::MalformedWav("odd sample count in stereo data".into()));
        }
        interleaved
            .chunks_exact(2)
            .map(|frame| (frame[0] + frame[1]) / 2.0)
            .collect()
    } else {
        interleaved
    };
    if samples.is_empty() {
        return Err(Error::MalformedWav("data chunk holds no samples".into()));
    }
    if spec.sample_rate < AudioClip::MIN_SAMPLE_RATE_HZ {
        return Err(Error::UnsupportedFormat(format!(
            "sample rate {} Hz",
            spec.sample_rate
        )));
    }
    AudioClip::new(samples, spec.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

impl BitDepth {
    pub fn from_bits(bits: u16) -> Result<Self> {
        match bits {
            16 => Ok(BitDepth::Pcm16),
            32 => Ok(BitDepth::Float32),
            other => Err(Error::UnsupportedFormat(format!("{other}-bit output"))),
        }
    }
}

/// Quantizes one sample to 16-bit PCM, clamping to `[-1, 1 - 1/32768]`.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, PCM16_MAX) * 32768.0).round() as i16
}

/// Writes a mono WAV file.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    if clip.samples().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidClip("non-finite sample".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz(),
        bits_per_sample: match depth {
            BitDepth::Pcm16 => 16,
            BitDepth::Float32 => 32,
        },
        sample_format: match depth {
            BitDepth::Pcm16 => hound::SampleFormat::Int,
            BitDepth::Float32 => hound::SampleFormat::Float,
        },
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for &x in clip.samples() {
        match depth {
            BitDepth::Pcm16 => writer.write_sample(quantize_pcm16(x)),
            BitDepth::Float32 => writer.write_sample(x as f32),
        }
        .map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_clip_writes_zero_data_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.wav");
        let clip = AudioClip::new(vec![0.0; 100], 44_100).unwrap();
        write_wav(&clip, &path, BitDepth::Pcm16).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let data_pos = bytes.windows(4).position(|w| w == b"data").unwrap();
        let len = u32::from_le_bytes(bytes[data_pos + 4..data_pos + 8].try_into().unwrap());
        assert_eq!(len, 200);
        assert!(bytes[data_pos + 8..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pcm16_clamps_overrange() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let clip = AudioClip::new(vec![1.5, -1.5, 1.0], 44_100).unwrap();
        write_wav(&clip, &path, BitDepth::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples(), &[PCM16_MAX, -1.0, PCM16_MAX]);
    }

    #[test]
    fn single_sample_clip_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.wav");
        let clip = AudioClip::new(vec![0.25], 16_000).unwrap();
        write_wav(&clip, &path, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), clip);
    }

    #[test]
    fn clip_invariants() {
        assert!(AudioClip::new(vec![], 44_100).is_err());
        assert!(AudioClip::new(vec![0.0], 4_000).is_err());
    }

    #[test]
    fn label_order_and_parsing() {
        for (i, l) in TouchLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.name().parse::<TouchLabel>().unwrap(), *l);
        }
        match "Smack".parse::<TouchLabel>() {
            Err(Error::UnknownLabel(s)) => assert_eq!(s, "Smack"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_unknown_label_is_named() {
        let text = r#"{"version":1,"sample_rate_hz":44100,"entries":[{"path":"a.wav","label":"Smack"}]}"#;
        match parse_manifest(text) {
            Err(Error::UnknownLabel(s)) => assert_eq!(s, "Smack"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_parse_error_has_position() {
        let text = "{\n  \"version\": 1,\n  \"entries\": [oops]\n}";
        match parse_manifest(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_duplicates_and_versions() {
        let dup = r#"{"version":1,"sample_rate_hz":44100,"entries":[
            {"path":"a.wav","label":"Tap"},{"path":"a.wav","label":"Rub"}]}"#;
        assert!(matches!(parse_manifest(dup), Err(Error::DuplicatePath(_))));
        let v2 = r#"{"version":2,"sample_rate_hz":44100,"entries":[]}"#;
        assert!(matches!(parse_manifest(v2), Err(Error::ManifestVersion(2))));
    }

    #[test]
    fn empty_manifest_is_valid() {
        let m = parse_manifest(r#"{"version":1,"sample_rate_hz":44100,"entries":[]}"#).unwrap();
        assert!(m.is_empty());
    }
}
