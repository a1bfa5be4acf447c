//! Stratified splitting, confusion matrices and merged-class scoring.
//!
//! Per-class accuracy is recall: the diagonal count over the row total.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{read_wav, DatasetManifest, Split, TouchLabel};
use crate::error::{Error, Result};
use crate::features::{class_frequency_stats, ClassFrequencyStats};
use crate::model::CnnModel;
use crate::pipeline::SignalPipeline;
use crate::synth::splitmix64;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self {
            class_names,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn for_labels() -> Self {
        Self::new(TouchLabel::ALL.iter().map(|l| l.name().to_string()).collect())
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_names.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidConfig(format!("counts are not {k}x{k}")));
        }
        Ok(Self { class_names, counts })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Recall per class; `None` for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.classes())
            .map(|i| {
                let row = self.row_total(i);
                (row > 0).then(|| self.counts[i][i] as f64 / row as f64)
            })
            .collect()
    }

    /// Trace over total; `None` for an empty matrix.
    pub fn overall_accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Header row of class names, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Total map from class index to group index, groups numbered `0..G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMerge {
    assignment: Vec<usize>,
    group_names: Vec<String>,
}

impl ClassMerge {
    pub fn new(assignment: Vec<usize>, group_names: Vec<String>) -> Result<Self> {
        let groups = group_names.len();
        if assignment.iter().any(|&g| g >= groups) {
            return Err(Error::InvalidConfig("merge assigns a class to a missing group".into()));
        }
        if (0..groups).any(|g| !assignment.contains(&g)) {
            return Err(Error::InvalidConfig("merge has an empty group".into()));
        }
        Ok(Self {
            assignment,
            group_names,
        })
    }

    /// Every class in its own group.
    pub fn identity(class_names: &[String]) -> Self {
        Self {
            assignment: (0..class_names.len()).collect(),
            group_names: class_names.to_vec(),
        }
    }

    /// Knock+Tap, Rub+Stroke, Scratch, Press.
    pub fn similar_touches() -> Self {
        use TouchLabel::*;
        let group = |l: TouchLabel| match l {
            Knock | Tap => 0,
            Rub | Stroke => 1,
            Scratch => 2,
            Press => 3,
        };
        Self {
            assignment: TouchLabel::ALL.iter().map(|&l| group(l)).collect(),
            group_names: ["Knock+Tap", "Rub+Stroke", "Scratch", "Press"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn classes(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_of(&self, class: usize) -> usize {
        self.assignment[class]
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }
}

/// Sums counts over merged rows and columns.
pub fn merge_classes(cm: &ConfusionMatrix, merge: &ClassMerge) -> Result<ConfusionMatrix> {
    if merge.classes() != cm.classes() {
        return Err(Error::ClassCountMismatch {
            model: cm.classes(),
            expected: merge.classes(),
        });
    }
    let mut out = ConfusionMatrix::new(merge.group_names.clone());
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            out.counts[merge.group_of(i)][merge.group_of(j)] += c;
        }
    }
    Ok(out)
}

/// Stratified split: per label, `round(test_fraction * n)` entries (at least
/// one, at most `n - 1`) go to Test, chosen by a seeded shuffle.
pub fn split_dataset(manifest: &DatasetManifest, test_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction}")));
    }
    let mut out = manifest.clone();
    for label in TouchLabel::ALL {
        let mut members: Vec<usize> = (0..out.entries.len())
            .filter(|&i| out.entries[i].label == label)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label: label.name().to_string(),
                count: members.len(),
            });
        }
        let n = members.len();
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ ((label.index() as u64 + 1) << 56)));
        members.shuffle(&mut rng);
        for (rank, &i) in members.iter().enumerate() {
            out.entries[i].split = Some(if rank < n_test { Split::Test } else { Split::Train });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Matrix at the model's resolution: six labels, or merge groups for a
    /// model trained on merged classes.
    pub matrix: ConfusionMatrix,
    /// Dominant-frequency statistics of the evaluated clips.
    pub frequency_stats: ClassFrequencyStats,
    /// Clips that failed to load or preprocess, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Classifies every Test entry and tallies a confusion matrix. A 6-class
/// model yields a label matrix; a model with `merge.groups()` classes yields
/// a group matrix (true labels mapped through `merge`).
pub fn evaluate(
    model: &CnnModel,
    manifest: &DatasetManifest,
    base_dir: &Path,
    pipeline: &SignalPipeline,
    merge: Option<&ClassMerge>,
) -> Result<Evaluation> {
    let (mut matrix, merge_truth) = if model.classes() == TouchLabel::COUNT {
        (ConfusionMatrix::for_labels(), None)
    } else {
        match merge {
            Some(m) if m.groups() == model.classes() => (ConfusionMatrix::new(m.group_names.clone()), Some(m)),
            _ => {
                return Err(Error::ClassCountMismatch {
                    model: model.classes(),
                    expected: merge.map_or(TouchLabel::COUNT, ClassMerge::groups),
                })
            }
        }
    };

    let test: Vec<_> = manifest.entries_in(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::EmptySplit("Test"));
    }
    let mut skipped = Vec::new();
    let mut dominant = Vec::new();
    for entry in test {
        let analysis = read_wav(DatasetManifest::resolve(base_dir, entry)).and_then(|clip| pipeline.analyze(&clip));
        let analysis = match analysis {
            Ok(a) => a,
            Err(e) => {
                skipped.push((entry.path.clone(), e.to_string()));
                continue;
            }
        };
        let predicted = model.predict(&analysis.spectrogram)?;
        let actual = merge_truth.map_or(entry.label.index(), |m| m.group_of(entry.label.index()));
        matrix.record(actual, predicted);
        dominant.push((entry.label, analysis.features.dominant_frequency_hz));
    }
    Ok(Evaluation {
        matrix,
        frequency_stats: class_frequency_stats(dominant),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub frequency: Option<(f64, f64)>,
    pub accuracy: Option<f64>,
    pub merged_accuracy: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |a| format!("{a:.2}"))
}

/// Plain-text table: class, dominant frequency mean ± std, accuracy, merged
/// accuracy.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<12} {:>24} {:>10} {:>18}\n",
        "Touch type", "Dominant frequency (Hz)", "Accuracy", "Merged accuracy"
    );
    for r in rows {
        let freq = r
            .frequency
            .map_or_else(|| "-".to_string(), |(m, s)| format!("{m:.0} ± {s:.0}"));
        let _ = writeln!(
            out,
            "{:<12} {:>24} {:>10} {:>18}",
            r.name,
            freq,
            fmt_opt(r.accuracy),
            fmt_opt(r.merged_accuracy)
        );
    }
    out
}

/// Per-label rows for a 6-way matrix. Each merged group's accuracy is shown
/// on the row of its last member.
pub fn label_report_rows(
    matrix: &ConfusionMatrix,
    stats: &ClassFrequencyStats,
    merge: Option<&ClassMerge>,
) -> Result<Vec<ReportRow>> {
    let per_class = matrix.per_class_accuracy();
    let merged = merge.map(|m| merge_classes(matrix, m)).transpose()?;
    let merged_acc = merged.as_ref().map(ConfusionMatrix::per_class_accuracy);
    Ok(TouchLabel::ALL
        .iter()
        .map(|&label| {
            let i = label.index();
            let merged_accuracy = merge.zip(merged_acc.as_ref()).and_then(|(m, acc)| {
                let g = m.group_of(i);
                let last = (0..m.classes()).rev().find(|&c| m.group_of(c) == g);
                (last == Some(i)).then_some(acc[g]).flatten()
            });
            ReportRow {
                name: label.name().to_string(),
                frequency: stats.get(label).map(|s| (s.mean_hz, s.std_hz)),
                accuracy: per_class.get(i).copied().flatten(),
                merged_accuracy,
            }
        })
        .collect())
}

/// Full evaluation report: table, overall accuracies and confusion CSV.
pub fn render_report(eval: &Evaluation, merge: Option<&ClassMerge>) -> Result<String> {
    let mut out = String::new();
    let matrix = &eval.matrix;
    let overall = |m: &ConfusionMatrix| fmt_opt(m.overall_accuracy());
    if matrix.classes() == TouchLabel::COUNT {
        let rows = label_report_rows(matrix, &eval.frequency_stats, merge)?;
        out.push_str(&render_table(&rows));
        let _ = writeln!(out, "\nOverall accuracy: {}", overall(matrix));
        if let Some(m) = merge {
            let merged = merge_classes(matrix, m)?;
            let _ = writeln!(
                out,
                "Merged overall accuracy: {} (6-way predictions collapsed into {} groups)",
                overall(&merged),
                m.groups()
            );
        }
    } else {
        let per_class = matrix.per_class_accuracy();
        let rows: Vec<ReportRow> = matrix
            .class_names()
            .iter()
            .zip(per_class)
            .map(|(name, acc)| ReportRow {
                name: name.clone(),
                frequency: None,
                accuracy: None,
                merged_accuracy: acc,
            })
            .collect();
        out.push_str(&render_table(&rows));
        let _ = writeln!(
            out,
            "\nMerged overall accuracy: {} (model trained on {} merged classes)",
            overall(matrix),
            matrix.classes()
        );
    }
    let _ = writeln!(out, "Evaluated clips: {}", matrix.total());
    for (path, why) in &eval.skipped {
        let _ = writeln!(out, "Skipped {path}: {why}");
    }
    out.push_str("\nConfusion matrix (rows = true, columns = predicted):\n");
    out.push_str(&matrix.to_csv());
    Ok(out)
}
