//! `touchsound` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Flags are validated
//! before anything is written.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio_io::{
    load_manifest, read_wav, save_manifest, write_wav, AudioClip, BitDepth, DatasetManifest, TouchLabel,
    DEFAULT_SAMPLE_RATE_HZ,
};
use crate::error::Error;
use crate::eval::{evaluate, render_report, split_dataset, ClassMerge};
use crate::features::{averaged_spectrum, class_frequency_stats, read_feature_csv, write_feature_csv, FeatureRow};
use crate::model::{load_model, save_model, train, CnnModel, TrainConfig};
use crate::pipeline::SignalPipeline;
use crate::preprocess::{FilterSpec, TrimConfig};
use crate::spectrogram::{bucket_rows, stft_magnitude, to_log, Grid, StftConfig};
use crate::synth::{generate_dataset, TouchSynthParams};

/// Lowest sample rate that still represents content up to 16 kHz.
pub const MIN_CLI_SAMPLE_RATE_HZ: u32 = 32_000;

#[derive(Debug, Parser)]
#[command(name = "touchsound", version, about = "Acoustic touch-type recognition")]
pub struct Cli {
    /// Seed for synthesis, splitting and training.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Sample rate for synthesized audio, Hz.
    #[arg(long, global = true, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    pub sample_rate: u32,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct PipelineArgs {
    /// High-pass cutoff, Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub cutoff_hz: f64,
    /// Butterworth order (2, 4 or 8).
    #[arg(long, default_value_t = 4)]
    pub filter_order: usize,
    /// Trim gate relative to the loudest frame, dB.
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    pub trim_db: f64,
    /// Trim analysis frame length, ms.
    #[arg(long, default_value_t = 10.0)]
    pub trim_frame_ms: f64,
}

impl PipelineArgs {
    fn pipeline(&self) -> SignalPipeline {
        SignalPipeline {
            filter: FilterSpec {
                cutoff_hz: self.cutoff_hz,
                order: self.filter_order,
            },
            trim: TrimConfig {
                frame_ms: self.trim_frame_ms,
                threshold_db: self.trim_db,
            },
            stft: StftConfig::default(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 48)]
        per_class: usize,
    },
    /// Write preprocessed copies of every clip in a manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Extract per-clip features to CSV.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Print per-class dominant frequency statistics from a feature CSV.
    Stats {
        #[arg(long)]
        features: PathBuf,
    },
    /// Train the CNN. Manifests without splits are split 80/20 by --seed.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// Train on merged classes (Knock+Tap, Rub+Stroke, Scratch, Press).
        #[arg(long)]
        merge: bool,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 1e-2)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Evaluate a model on the Test split and print the report.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also report accuracy with similar touch types merged.
        #[arg(long)]
        merge: bool,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Classify one WAV file.
    Classify {
        #[arg(long)]
        model: PathBuf,
        file: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Write raw vs preprocessed waveform, spectrum and spectrogram CSVs.
    Figdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_prefix: String,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nUsage: touchsound [--seed S] [--sample-rate R] <synth|preprocess|featurize|stats|train|eval|classify|figdata> ...");
            1
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn check_pipeline(args: &PipelineArgs, sample_rate_hz: u32) -> std::result::Result<SignalPipeline, Failure> {
    let pipeline = args.pipeline();
    pipeline
        .validate(sample_rate_hz)
        .map_err(|e| usage(e.to_string()))?;
    Ok(pipeline)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ensure_splits(manifest: DatasetManifest, test_fraction: f64, seed: u64) -> std::result::Result<DatasetManifest, Failure> {
    if manifest.has_splits() {
        Ok(manifest)
    } else {
        Ok(split_dataset(&manifest, test_fraction, seed)?)
    }
}

fn class_names(model: &CnnModel) -> Vec<String> {
    if model.classes() == TouchLabel::COUNT {
        TouchLabel::ALL.iter().map(|l| l.name().to_string()).collect()
    } else if model.classes() == ClassMerge::similar_touches().groups() {
        ClassMerge::similar_touches().group_names().to_vec()
    } else {
        (0..model.classes()).map(|i| format!("class{i}")).collect()
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Synth { out: dir, per_class } => {
            if *per_class == 0 {
                return Err(usage("--per-class must be at least 1"));
            }
            if cli.sample_rate < MIN_CLI_SAMPLE_RATE_HZ {
                return Err(usage(format!(
                    "--sample-rate must be at least {MIN_CLI_SAMPLE_RATE_HZ} Hz"
                )));
            }
            let manifest = generate_dataset(*per_class, dir, cli.seed, cli.sample_rate, &TouchSynthParams::default())?;
            let _ = writeln!(
                out,
                "wrote {} clips and {}",
                manifest.len(),
                dir.join("manifest.json").display()
            );
            Ok(())
        }
        Command::Preprocess {
            manifest: manifest_path,
            out: dir,
            pipeline,
        } => {
            let manifest = load_manifest(manifest_path)?;
            let pipeline = check_pipeline(pipeline, manifest.sample_rate_hz)?;
            let base = manifest_dir(manifest_path);
            for entry in &manifest.entries {
                let src = DatasetManifest::resolve(&base, entry);
                let processed = pipeline.preprocess(&read_wav(&src)?).map_err(|e| with_path(&src, e))?;
                let dst = DatasetManifest::resolve(dir, entry);
                if let Some(parent) = dst.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| io_fail(parent, e))?;
                }
                write_wav(&processed, &dst, BitDepth::Float32)?;
            }
            save_manifest(&manifest, dir.join("manifest.json"))?;
            let _ = writeln!(out, "preprocessed {} clips into {}", manifest.len(), dir.display());
            Ok(())
        }
        Command::Featurize {
            manifest: manifest_path,
            out: csv_path,
            pipeline,
        } => {
            let manifest = load_manifest(manifest_path)?;
            let pipeline = check_pipeline(pipeline, manifest.sample_rate_hz)?;
            let base = manifest_dir(manifest_path);
            let rows = manifest
                .entries
                .iter()
                .map(|entry| {
                    let src = DatasetManifest::resolve(&base, entry);
                    let features = pipeline.features(&read_wav(&src)?).map_err(|e| with_path(&src, e))?;
                    Ok(FeatureRow {
                        path: entry.path.clone(),
                        label: entry.label,
                        features,
                    })
                })
                .collect::<crate::Result<Vec<_>>>()?;
            write_feature_csv(&rows, csv_path)?;
            let _ = writeln!(out, "wrote features of {} clips to {}", rows.len(), csv_path.display());
            Ok(())
        }
        Command::Stats { features } => {
            let rows = read_feature_csv(features)?;
            let stats = class_frequency_stats(rows.iter().map(|r| (r.label, r.features.dominant_frequency_hz)));
            let _ = write!(out, "{}", stats.render());
            Ok(())
        }
        Command::Train {
            manifest: manifest_path,
            out: model_path,
            epochs,
            merge,
            test_fraction,
            learning_rate,
            batch_size,
            pipeline,
        } => {
            let config = TrainConfig {
                learning_rate: *learning_rate,
                epochs: *epochs,
                batch_size: *batch_size,
                seed: cli.seed,
                class_merge: merge.then(ClassMerge::similar_touches),
                ..TrainConfig::default()
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return Err(usage("--test-fraction must lie in (0, 1)"));
            }
            let manifest = load_manifest(manifest_path)?;
            let pipeline = check_pipeline(pipeline, manifest.sample_rate_hz)?;
            let manifest = ensure_splits(manifest, *test_fraction, cli.seed)?;
            let (model, report) = train(&manifest, &manifest_dir(manifest_path), &pipeline, &config)?;
            let mut text = format!("initial loss {:.6}\n", report.initial_loss);
            for (i, (loss, acc)) in report.epoch_loss.iter().zip(&report.epoch_accuracy).enumerate() {
                let _ = writeln!(text, "epoch {:>3}  loss {loss:.6}  train accuracy {acc:.4}", i + 1);
            }
            let _ = writeln!(text, "test accuracy {:.4}", report.test_accuracy);
            let _ = out.write_all(text.as_bytes());
            let _ = writeln!(err, "training took {:.1} s", report.wall_time.as_secs_f64());
            save_model(&model, model_path)?;
            let _ = writeln!(out, "saved model to {}", model_path.display());
            Ok(())
        }
        Command::Eval {
            manifest: manifest_path,
            model: model_path,
            merge,
            test_fraction,
            pipeline,
        } => {
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return Err(usage("--test-fraction must lie in (0, 1)"));
            }
            let model = load_model(model_path)?;
            let manifest = load_manifest(manifest_path)?;
            let pipeline = check_pipeline(pipeline, manifest.sample_rate_hz)?;
            let manifest = ensure_splits(manifest, *test_fraction, cli.seed)?;
            let grouping = ClassMerge::similar_touches();
            let merged_model = model.classes() == grouping.groups();
            let merge = (*merge || merged_model).then_some(&grouping);
            let evaluation = evaluate(&model, &manifest, &manifest_dir(manifest_path), &pipeline, merge)?;
            let _ = write!(out, "{}", render_report(&evaluation, merge)?);
            Ok(())
        }
        Command::Classify {
            model: model_path,
            file,
            pipeline,
        } => {
            let model = load_model(model_path)?;
            let clip = read_wav(file)?;
            let pipeline = check_pipeline(pipeline, clip.sample_rate_hz())?;
            let spectrogram = pipeline.spectrogram(&clip).map_err(|e| with_path(file, e))?;
            let probs = model.forward(&spectrogram)?;
            let names = class_names(&model);
            let best = crate::model::argmax(&probs);
            let mut text = format!("{}\n", names[best]);
            for (name, p) in names.iter().zip(&probs) {
                let _ = writeln!(text, "{name} {p:.6}");
            }
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
        Command::Figdata {
            input,
            out_prefix,
            pipeline,
        } => {
            let raw = read_wav(input)?;
            let pipeline = check_pipeline(pipeline, raw.sample_rate_hz())?;
            let processed = pipeline.preprocess(&raw).map_err(|e| with_path(input, e))?;
            let written = write_figdata(&raw, &processed, &pipeline.stft, out_prefix)?;
            for path in written {
                let _ = writeln!(out, "wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::InvalidClip(format!("{}: {other}", path.display())),
    }
}

fn waveform_csv(clip: &AudioClip) -> String {
    let fs = f64::from(clip.sample_rate_hz());
    let mut s = String::from("time_s,amplitude\n");
    for (i, x) in clip.samples().iter().enumerate() {
        let _ = writeln!(s, "{:.6},{x:.6}", i as f64 / fs);
    }
    s
}

fn log_spectrogram(clip: &AudioClip, stft: &StftConfig) -> crate::Result<Grid> {
    let log = to_log(&stft_magnitude(clip, stft)?, stft.floor_db)?;
    bucket_rows(&log, stft.target_shape.0)
}

fn spectrum_db(clip: &AudioClip, stft: &StftConfig) -> crate::Result<(f64, Vec<f64>)> {
    let spectrum = averaged_spectrum(clip, stft)?;
    let max = spectrum.magnitudes.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateAllZero);
    }
    Ok((
        spectrum.bin_hz,
        spectrum
            .magnitudes
            .iter()
            .map(|m| (20.0 * (m / max).max(f64::MIN_POSITIVE).log10()).max(stft.floor_db))
            .collect(),
    ))
}

/// Writes `<prefix>_{waveform_raw,waveform_processed,spectrum,
/// spectrogram_raw,spectrogram_processed}.csv`.
pub fn write_figdata(
    raw: &AudioClip,
    processed: &AudioClip,
    stft: &StftConfig,
    prefix: &str,
) -> crate::Result<Vec<PathBuf>> {
    let (bin_hz, raw_db) = spectrum_db(raw, stft)?;
    let (_, processed_db) = spectrum_db(processed, stft)?;
    let mut spectrum = String::from("frequency_hz,raw_db,processed_db\n");
    for (k, (r, p)) in raw_db.iter().zip(&processed_db).enumerate() {
        let _ = writeln!(spectrum, "{:.3},{r:.3},{p:.3}", k as f64 * bin_hz);
    }
    let files = [
        ("waveform_raw", waveform_csv(raw)),
        ("waveform_processed", waveform_csv(processed)),
        ("spectrum", spectrum),
        ("spectrogram_raw", log_spectrogram(raw, stft)?.to_csv()),
        ("spectrogram_processed", log_spectrogram(processed, stft)?.to_csv()),
    ];
    let mut written = Vec::new();
    for (suffix, body) in files {
        let path = PathBuf::from(format!("{prefix}_{suffix}.csv"));
        std::fs::write(&path, body).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}
