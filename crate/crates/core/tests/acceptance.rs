//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use touchsound::audio_io::load_manifest;
use touchsound::cli;
use touchsound::eval::{evaluate, merge_classes, split_dataset, ClassMerge, ConfusionMatrix};
use touchsound::features::{class_frequency_stats, read_feature_csv};
use touchsound::model::{load_model, CnnModel};
use touchsound::preprocess::{
    design_highpass, normalize_peak, preprocess_pipeline, remove_dc, trim_bounds, trim_silence, FilterSpec,
    TrimConfig,
};
use touchsound::spectrogram::{one_sided_energy, stft_magnitude_samples, StftConfig};
use touchsound::{SignalPipeline, TouchLabel};

use rand::Rng;

const SEED: &str = "2024";
const TARGET_FREQUENCIES_HZ: [f64; 6] = [1938.0, 1769.0, 1663.0, 1605.0, 1641.0, 2269.0];
const FREQUENCY_TOLERANCE: f64 = 0.15;
const MIN_ACCURACY: f64 = 0.85;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn criterion(&mut self, name: &str, budget: Duration, check: impl FnOnce() -> Check) {
        let started = Instant::now();
        let result = check();
        let elapsed = started.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget of {:.0} s", budget.as_secs_f64())),
            Err(e) => (false, e),
        };
        if !ok {
            self.failures += 1;
        }
        println!(
            "{} {name:<28} {:>7.2} s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn filter_correctness() -> Check {
    let sections = design_highpass(&FilterSpec::default(), 44_100).map_err(|e| e.to_string())?;
    let at = |f| cascade_gain_db(&sections, f, 44_100.0);
    let (g1k, g100, g8k) = (at(1000.0), at(100.0), at(8000.0));
    ensure((g1k + 3.0).abs() <= 0.5, || format!("1 kHz gain {g1k:.3} dB"))?;
    ensure(g100 <= -40.0, || format!("100 Hz gain {g100:.3} dB"))?;
    ensure(g8k.abs() <= 0.5, || format!("8 kHz gain {g8k:.3} dB"))?;
    for f in [100.0, 1000.0, 8000.0] {
        let ideal = butterworth_highpass_db(4, 1000.0, f, 44_100.0);
        ensure((at(f) - ideal).abs() < 1e-6, || format!("{f} Hz departs from ideal curve"))?;
    }
    Ok(format!("1 kHz {g1k:.2} dB, 100 Hz {g100:.1} dB, 8 kHz {g8k:+.3} dB"))
}

fn preprocessing_laws() -> Check {
    let mut r = rng(7);
    let trim = TrimConfig::default();
    let clips = 1000;
    let mut trimmed_count = 0;
    for i in 0..clips {
        let c = random_clip(&mut r);
        let centered = remove_dc(&c);
        let mean = compensated_mean(centered.samples()).abs();
        ensure(mean <= 1e-9 * c.peak().max(1.0), || format!("clip {i}: mean {mean:e}"))?;
        let again = remove_dc(&centered);
        ensure(
            again.samples().iter().zip(centered.samples()).all(|(a, b)| (a - b).abs() <= 1e-12),
            || format!("clip {i}: DC removal not idempotent"),
        )?;

        let (norm, _) = normalize_peak(&c);
        ensure(norm.peak() == 1.0, || format!("clip {i}: peak {}", norm.peak()))?;
        ensure(normalize_peak(&norm).0 == norm, || format!("clip {i}: normalization not idempotent"))?;

        if let Ok(trimmed) = trim_silence(&centered, &trim) {
            trimmed_count += 1;
            let (start, end) = trim_bounds(&centered, &trim).map_err(|e| e.to_string())?;
            ensure(trimmed.samples() == &centered.samples()[start..end], || format!("clip {i}: trim not contiguous"))?;
            ensure(trim_silence(&trimmed, &trim).ok().as_ref() == Some(&trimmed), || {
                format!("clip {i}: trim not idempotent")
            })?;
            let full = preprocess_pipeline(&c, &FilterSpec::default(), &trim).map_err(|e| e.to_string())?;
            ensure(full.peak() == 1.0, || format!("clip {i}: pipeline peak {}", full.peak()))?;
        }
    }
    ensure(trimmed_count >= clips * 9 / 10, || format!("only {trimmed_count} clips trimmed"))?;
    Ok(format!("{clips} clips, {trimmed_count} through trim"))
}

fn spectrogram_checks() -> Check {
    let config = StftConfig::default();
    let mut r = rng(20);
    for _ in 0..20 {
        let k = r.random_range(1..config.window_size / 2);
        let f = k as f64 * 44_100.0 / config.window_size as f64;
        let grid = stft_magnitude_samples(&sine(f, 1.0, 0.2, 44_100), &config).map_err(|e| e.to_string())?;
        for t in 0..grid.cols() {
            let col = grid.column(t);
            let best = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
            ensure(best == k, || format!("bin {k} frame {t}: argmax {best}"))?;
        }
    }
    let frame: Vec<f64> = (0..config.window_size).map(|_| r.random_range(-1.0..1.0)).collect();
    let grid = stft_magnitude_samples(&frame, &config).map_err(|e| e.to_string())?;
    let windowed: Vec<f64> = frame.iter().zip(hann(frame.len())).map(|(x, w)| x * w).collect();
    let oracle: f64 = dft_power(&windowed).iter().sum();
    let rel = (one_sided_energy(&grid.column(0)) - oracle).abs() / oracle;
    ensure(rel <= 1e-6, || format!("energy relative error {rel:e}"))?;
    Ok(format!("20 tones on bin, frame energy rel. error {rel:.1e}"))
}

fn gradient_criterion() -> Check {
    let model = CnnModel::init(tiny_architecture(3), 5).map_err(|e| e.to_string())?;
    let mut r = rng(17);
    let batch: Vec<_> = (0..3).map(|i| (random_spectrogram(&mut r, 8, -80.0), i % 3)).collect();
    let check = gradient_check(&model, &batch, 1e-3, 1e-6);
    ensure(check.max_relative_error <= 1e-3, || {
        format!("parameter {} off by {:.2e}", check.worst_index, check.max_relative_error)
    })?;
    Ok(format!("{} parameters, max rel. error {:.1e}", check.parameters, check.max_relative_error))
}

struct Run {
    manifest: Vec<u8>,
    model: Vec<u8>,
    report: String,
    train_log: String,
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("touchsound").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn full_run(dir: &Path) -> Result<Run, String> {
    let data = dir.join("data");
    let manifest = data.join("manifest.json");
    let model = dir.join("model.tsm");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    cli(&["synth", "--out", &s(&data), "--per-class", "48", "--seed", SEED])?;
    let train_log = cli(&["train", "--manifest", &s(&manifest), "--out", &s(&model), "--epochs", "30", "--seed", SEED])?;
    let report = cli(&["eval", "--manifest", &s(&manifest), "--model", &s(&model), "--seed", SEED, "--merge"])?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok(Run {
        manifest: read(&manifest)?,
        model: read(&model)?,
        report,
        train_log,
    })
}

fn parse_loss(log: &str, prefix: &str) -> Option<f64> {
    log.lines()
        .find(|l| l.starts_with(prefix))
        .and_then(|l| l.split("loss ").nth(1))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
}

fn end_to_end(dir: &Path, run: &Result<Run, String>, matrix: &mut Option<ConfusionMatrix>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let manifest = load_manifest(dir.join("data/manifest.json")).map_err(|e| e.to_string())?;
    ensure(manifest.len() == 288 && manifest.count_per_label() == [48; 6], || {
        format!("dataset has {} clips", manifest.len())
    })?;
    let split = split_dataset(&manifest, 0.2, SEED.parse().unwrap()).map_err(|e| e.to_string())?;
    let model = load_model(dir.join("model.tsm")).map_err(|e| e.to_string())?;
    let result = evaluate(&model, &split, &dir.join("data"), &SignalPipeline::default(), None).map_err(|e| e.to_string())?;
    let accuracy = result.matrix.overall_accuracy().unwrap_or(0.0);
    let tested = result.matrix.total();
    *matrix = Some(result.matrix);

    let initial = parse_loss(&run.train_log, "initial").ok_or("no initial loss in training log")?;
    let first = parse_loss(&run.train_log, "epoch   1").ok_or("no epoch 1 loss")?;
    let tenth = parse_loss(&run.train_log, "epoch  10").ok_or("no epoch 10 loss")?;
    let last = parse_loss(&run.train_log, "epoch  30").ok_or("no epoch 30 loss")?;
    ensure(last < initial, || format!("final loss {last} not below initial {initial}"))?;
    ensure(tenth < first, || format!("epoch 10 loss {tenth} not below epoch 1 {first}"))?;
    ensure(tested == 60, || format!("{tested} test clips"))?;
    ensure(accuracy >= MIN_ACCURACY, || format!("test accuracy {accuracy:.4}"))?;
    Ok(format!("288 clips, 60 tested, accuracy {accuracy:.4}, loss {initial:.3} -> {last:.4}"))
}

fn merge_monotonicity(matrix: &Option<ConfusionMatrix>) -> Check {
    let mut r = rng(1000);
    for i in 0..1000 {
        let k = r.random_range(2..9usize);
        let names: Vec<String> = (0..k).map(|c| c.to_string()).collect();
        let cm = ConfusionMatrix::from_counts(names, random_counts(&mut r, k, 25)).map_err(|e| e.to_string())?;
        let (assignment, g) = random_assignment(&mut r, k);
        let merge = ClassMerge::new(assignment, (0..g).map(|c| c.to_string()).collect()).map_err(|e| e.to_string())?;
        let merged = merge_classes(&cm, &merge).map_err(|e| e.to_string())?;
        ensure(merged.total() == cm.total() && merged.trace() >= cm.trace(), || format!("matrix {i} lost accuracy"))?;
    }
    let cm = matrix.as_ref().ok_or("no end-to-end confusion matrix")?;
    let merged = merge_classes(cm, &ClassMerge::similar_touches()).map_err(|e| e.to_string())?;
    let (before, after) = (cm.overall_accuracy().unwrap_or(0.0), merged.overall_accuracy().unwrap_or(0.0));
    ensure(after >= before, || format!("similar-touch merge {before:.4} -> {after:.4}"))?;
    Ok(format!("1000 random merges, similar touches {before:.4} -> {after:.4}"))
}

fn frequency_fidelity(dir: &Path) -> Check {
    let csv = dir.join("features.csv");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    cli(&["featurize", "--manifest", &s(&dir.join("data/manifest.json")), "--out", &s(&csv)])?;
    let rows = read_feature_csv(&csv).map_err(|e| e.to_string())?;
    let stats = class_frequency_stats(rows.iter().map(|r| (r.label, r.features.dominant_frequency_hz)));
    let mut worst = 0.0f64;
    for label in TouchLabel::ALL {
        let target = TARGET_FREQUENCIES_HZ[label.index()];
        let mean = stats.get(label).ok_or(format!("no {label} clips"))?.mean_hz;
        let dev = (mean - target).abs() / target;
        worst = worst.max(dev);
        ensure(dev <= FREQUENCY_TOLERANCE, || format!("{label}: mean {mean:.0} Hz vs {target} Hz"))?;
    }
    Ok(format!("worst class deviation {:.1}%", 100.0 * worst))
}

fn determinism(first: &Result<Run, String>, second: &Result<Run, String>) -> Check {
    let (a, b) = (first.as_ref().map_err(Clone::clone)?, second.as_ref().map_err(Clone::clone)?);
    ensure(a.manifest == b.manifest, || "manifests differ".into())?;
    ensure(a.model == b.model, || "model files differ".into())?;
    ensure(a.report == b.report, || "reports differ".into())?;
    let losses = |log: &str| log.lines().filter(|l| !l.starts_with("saved model")).collect::<Vec<_>>().join("\n");
    ensure(losses(&a.train_log) == losses(&b.train_log), || "training logs differ".into())?;
    Ok(format!("manifest, {}-byte model and report identical", a.model.len()))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    println!("acceptance criteria");
    suite.criterion("filter correctness", Duration::from_secs(1), filter_correctness);
    suite.criterion("preprocessing laws", Duration::from_secs(30), preprocessing_laws);
    suite.criterion("spectrogram", Duration::from_secs(30), spectrogram_checks);
    suite.criterion("gradient check", Duration::from_secs(60), gradient_criterion);

    let first_dir = tempfile::tempdir().expect("temp dir");
    let second_dir = tempfile::tempdir().expect("temp dir");
    let mut matrix = None;
    let mut first = Err("end-to-end run did not start".to_string());
    suite.criterion("end-to-end accuracy", Duration::from_secs(300), || {
        first = full_run(first_dir.path());
        end_to_end(first_dir.path(), &first, &mut matrix)
    });
    suite.criterion("merge monotonicity", Duration::from_secs(30), || merge_monotonicity(&matrix));
    suite.criterion("frequency-stats fidelity", Duration::from_secs(60), || frequency_fidelity(first_dir.path()));
    suite.criterion("determinism", Duration::from_secs(300), || {
        determinism(&first, &full_run(second_dir.path()))
    });

    println!("{} failed", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
