//! A small convolutional network trained from scratch with minibatch SGD.
//!
//! Architecture (input `1 x S x S`, S = 64 by default):
//!
//! ```text
//! conv 3x3 (C1 filters, pad 1) -> ReLU -> maxpool 2x2
//! conv 3x3 (C2 filters, pad 1) -> ReLU -> maxpool 2x2
//! flatten (C2 * S/4 * S/4) -> dense H -> ReLU -> dense K -> softmax
//! ```
//!
//! The standard model uses C1 = 8, C2 = 16, H = 64; with K = 6 that is
//! 263,846 parameters. Weights are stored as `f32`; every forward and
//! backward pass accumulates in `f64`, and training runs single-threaded, so
//! a fixed seed reproduces the same bits on the same build.
//!
//! Parameters live in one flat vector laid out as conv1 weights, conv1
//! biases, conv2 weights, conv2 biases, dense1 weights, dense1 biases, dense2
//! weights, dense2 biases. Conv weights are `[out][in][3][3]`, dense weights
//! `[out][in]`, all row-major. The model file stores exactly that vector.

use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{read_wav, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::eval::ClassMerge;
use crate::pipeline::SignalPipeline;
use crate::spectrogram::Spectrogram;

pub const MODEL_MAGIC: [u8; 4] = *b"TSM1";
pub const MODEL_VERSION: u32 = 1;
const MAX_CLASSES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub const fn standard(classes: usize) -> Self {
        Self {
            input_side: 64,
            conv1_filters: 8,
            conv2_filters: 16,
            hidden: 64,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > MAX_CLASSES {
            return Err(Error::InvalidConfig(format!("{} classes", self.classes)));
        }
        if self.input_side == 0 || !self.input_side.is_multiple_of(4) {
            return Err(Error::InvalidConfig(format!(
                "input side {} is not a positive multiple of 4",
                self.input_side
            )));
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("empty layer".into()));
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        let q = self.input_side / 4;
        self.conv2_filters * q * q
    }

    fn layout(&self) -> [Range<usize>; 8] {
        let sizes = [
            self.conv1_filters * 9,
            self.conv1_filters,
            self.conv2_filters * self.conv1_filters * 9,
            self.conv2_filters,
            self.hidden * self.flat_len(),
            self.hidden,
            self.classes * self.hidden,
            self.classes,
        ];
        let mut start = 0;
        sizes.map(|n| {
            let r = start..start + n;
            start += n;
            r
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layout()[7].end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    arch: Architecture,
    params: Vec<f32>,
}

/// He-scaled uniform weights, zero biases.
pub fn init_model(seed: u64, classes: usize) -> Result<CnnModel> {
    CnnModel::init(Architecture::standard(classes), seed)
}

impl CnnModel {
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = arch.layout();
        let mut params = vec![0.0f32; arch.parameter_count()];
        let fan_ins = [9, arch.conv1_filters * 9, arch.flat_len(), arch.hidden];
        for (range, fan_in) in [&layout[0], &layout[2], &layout[4], &layout[6]].into_iter().zip(fan_ins) {
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut params[range.clone()] {
                *w = rng.random_range(-limit..limit) as f32;
            }
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn parameters(&self) -> &[f32] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// Final dense layer weights and biases, `[classes][hidden]` then `[classes]`.
    pub fn output_layer_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        let layout = self.arch.layout();
        let (head, biases) = self.params.split_at_mut(layout[7].start);
        (&mut head[layout[6].clone()], biases)
    }

    fn input_plane(&self, spectrogram: &Spectrogram) -> Result<Vec<f64>> {
        let side = self.arch.input_side;
        if spectrogram.shape() != (side, side) {
            return Err(Error::ShapeMismatch {
                expected: (side, side),
                actual: spectrogram.shape(),
            });
        }
        let floor = spectrogram.floor_db;
        let values = spectrogram.values.as_slice();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite spectrogram value".into()));
        }
        // dB in [floor, 0] -> [0, 1]
        Ok(values.iter().map(|&v| ((v - floor) / -floor).max(0.0)).collect())
    }

    /// Class probabilities for one spectrogram.
    pub fn forward(&self, spectrogram: &Spectrogram) -> Result<Vec<f64>> {
        let input = self.input_plane(spectrogram)?;
        let weights = Weights::new(self);
        Ok(forward_pass(&self.arch, &weights, &input).probs)
    }

    /// Index of the most probable class (first on ties).
    pub fn predict(&self, spectrogram: &Spectrogram) -> Result<usize> {
        Ok(argmax(&self.forward(spectrogram)?))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Parameters widened to `f64` once per batch.
struct Weights {
    conv1_w: Vec<f64>,
    conv1_b: Vec<f64>,
    conv2_w: Vec<f64>,
    conv2_b: Vec<f64>,
    dense1_w: Vec<f64>,
    dense1_b: Vec<f64>,
    dense2_w: Vec<f64>,
    dense2_b: Vec<f64>,
}

impl Weights {
    fn new(model: &CnnModel) -> Self {
        let l = model.arch.layout();
        let take = |r: &Range<usize>| model.params[r.clone()].iter().map(|&w| f64::from(w)).collect();
        Self {
            conv1_w: take(&l[0]),
            conv1_b: take(&l[1]),
            conv2_w: take(&l[2]),
            conv2_b: take(&l[3]),
            dense1_w: take(&l[4]),
            dense1_b: take(&l[5]),
            dense2_w: take(&l[6]),
            dense2_b: take(&l[7]),
        }
    }
}

/// Copies `channels` planes of `side x side` into zero-bordered planes of
/// `(side + 2) x (side + 2)`.
fn pad_planes(input: &[f64], channels: usize, side: usize) -> Vec<f64> {
    let ps = side + 2;
    let mut out = vec![0.0; channels * ps * ps];
    for c in 0..channels {
        for i in 0..side {
            let src = &input[(c * side + i) * side..(c * side + i + 1) * side];
            let dst = (c * ps + i + 1) * ps + 1;
            out[dst..dst + side].copy_from_slice(src);
        }
    }
    out
}

/// 3x3 same-padding convolution over padded input planes.
fn conv3x3(padded: &[f64], in_ch: usize, side: usize, weights: &[f64], biases: &[f64]) -> Vec<f64> {
    let ps = side + 2;
    let out_ch = biases.len();
    let mut out = vec![0.0; out_ch * side * side];
    for o in 0..out_ch {
        let plane = &mut out[o * side * side..(o + 1) * side * side];
        plane.iter_mut().for_each(|v| *v = biases[o]);
        for c in 0..in_ch {
            let src = &padded[c * ps * ps..(c + 1) * ps * ps];
            for di in 0..3 {
                for dj in 0..3 {
                    let w = weights[((o * in_ch + c) * 3 + di) * 3 + dj];
                    for i in 0..side {
                        let row = &src[(i + di) * ps + dj..(i + di) * ps + dj + side];
                        let dst = &mut plane[i * side..(i + 1) * side];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of the convolution weights/biases, and optionally of its padded
/// input, given the output gradient.
fn conv3x3_backward(
    padded: &[f64],
    in_ch: usize,
    side: usize,
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_padded: Option<&mut [f64]>,
) {
    let ps = side + 2;
    let out_ch = grad_b.len();
    for o in 0..out_ch {
        let g = &grad_out[o * side * side..(o + 1) * side * side];
        grad_b[o] += g.iter().sum::<f64>();
        for c in 0..in_ch {
            let src = &padded[c * ps * ps..(c + 1) * ps * ps];
            for di in 0..3 {
                for dj in 0..3 {
                    let wi = ((o * in_ch + c) * 3 + di) * 3 + dj;
                    let mut acc = 0.0;
                    for i in 0..side {
                        let row = &src[(i + di) * ps + dj..(i + di) * ps + dj + side];
                        let grow = &g[i * side..(i + 1) * side];
                        acc += row.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_w[wi] += acc;
                    if let Some(gp) = grad_padded.as_deref_mut() {
                        let w = weights[wi];
                        let dst_plane = &mut gp[c * ps * ps..(c + 1) * ps * ps];
                        for i in 0..side {
                            let grow = &g[i * side..(i + 1) * side];
                            let dst = &mut dst_plane[(i + di) * ps + dj..(i + di) * ps + dj + side];
                            for (d, s) in dst.iter_mut().zip(grow) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 max pooling; returns pooled values and the flat index of each winner.
fn maxpool2(input: &[f64], channels: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(channels * half * half);
    let mut arg = Vec::with_capacity(channels * half * half);
    for c in 0..channels {
        for i in 0..half {
            for j in 0..half {
                let base = c * side * side;
                let candidates = [
                    base + 2 * i * side + 2 * j,
                    base + 2 * i * side + 2 * j + 1,
                    base + (2 * i + 1) * side + 2 * j,
                    base + (2 * i + 1) * side + 2 * j + 1,
                ];
                let mut best = candidates[0];
                for &k in &candidates[1..] {
                    if input[k] > input[best] {
                        best = k;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

struct Activations {
    input_padded: Vec<f64>,
    conv1_out: Vec<f64>,
    pool1_arg: Vec<usize>,
    pool1_padded: Vec<f64>,
    conv2_out: Vec<f64>,
    pool2_arg: Vec<usize>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_pass(arch: &Architecture, w: &Weights, input: &[f64]) -> Activations {
    let s = arch.input_side;
    let (c1, c2) = (arch.conv1_filters, arch.conv2_filters);

    let input_padded = pad_planes(input, 1, s);
    let mut conv1_out = conv3x3(&input_padded, 1, s, &w.conv1_w, &w.conv1_b);
    relu_in_place(&mut conv1_out);
    let (pool1, pool1_arg) = maxpool2(&conv1_out, c1, s);

    let pool1_padded = pad_planes(&pool1, c1, s / 2);
    let mut conv2_out = conv3x3(&pool1_padded, c1, s / 2, &w.conv2_w, &w.conv2_b);
    relu_in_place(&mut conv2_out);
    let (flat, pool2_arg) = maxpool2(&conv2_out, c2, s / 2);

    let n_flat = flat.len();
    let mut hidden: Vec<f64> = (0..arch.hidden)
        .map(|h| {
            let row = &w.dense1_w[h * n_flat..(h + 1) * n_flat];
            w.dense1_b[h] + row.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    relu_in_place(&mut hidden);

    let logits: Vec<f64> = (0..arch.classes)
        .map(|k| {
            let row = &w.dense2_w[k * arch.hidden..(k + 1) * arch.hidden];
            w.dense2_b[k] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();

    Activations {
        input_padded,
        conv1_out,
        pool1_arg,
        pool1_padded,
        conv2_out,
        pool2_arg,
        flat,
        hidden,
        probs: softmax(&logits),
    }
}

/// Cross-entropy with the log argument clamped at this value.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn cross_entropy(probs: &[f64], class: usize) -> f64 {
    -probs[class].max(LOG_CLAMP).ln()
}

/// Accumulates `scale * d(loss)/d(params)` for one sample into `grad`.
fn backward_pass(
    arch: &Architecture,
    w: &Weights,
    act: &Activations,
    class: usize,
    scale: f64,
    grad: &mut [f64],
) {
    let layout = arch.layout();
    let s = arch.input_side;
    let (c1, c2) = (arch.conv1_filters, arch.conv2_filters);
    let n_flat = act.flat.len();
    let hdim = arch.hidden;

    let [g_c1w, g_c1b, g_c2w, g_c2b, g_d1w, g_d1b, g_d2w, g_d2b] = split_layout(grad, &layout);

    let dlogits: Vec<f64> = act
        .probs
        .iter()
        .enumerate()
        .map(|(k, &p)| scale * (p - if k == class { 1.0 } else { 0.0 }))
        .collect();

    let mut dhidden = vec![0.0; hdim];
    for (k, &dl) in dlogits.iter().enumerate() {
        g_d2b[k] += dl;
        let row = &w.dense2_w[k * hdim..(k + 1) * hdim];
        for h in 0..hdim {
            g_d2w[k * hdim + h] += dl * act.hidden[h];
            dhidden[h] += dl * row[h];
        }
    }

    let mut dflat = vec![0.0; n_flat];
    for h in 0..hdim {
        if act.hidden[h] <= 0.0 {
            continue;
        }
        let dh = dhidden[h];
        g_d1b[h] += dh;
        let row = &w.dense1_w[h * n_flat..(h + 1) * n_flat];
        let grow = &mut g_d1w[h * n_flat..(h + 1) * n_flat];
        for f in 0..n_flat {
            grow[f] += dh * act.flat[f];
            dflat[f] += dh * row[f];
        }
    }

    let half = s / 2;
    let mut dconv2 = vec![0.0; act.conv2_out.len()];
    for (f, &src) in act.pool2_arg.iter().enumerate() {
        if act.conv2_out[src] > 0.0 {
            dconv2[src] += dflat[f];
        }
    }
    let mut dpool1_padded = vec![0.0; act.pool1_padded.len()];
    conv3x3_backward(
        &act.pool1_padded,
        c1,
        half,
        &w.conv2_w,
        &dconv2,
        g_c2w,
        g_c2b,
        Some(&mut dpool1_padded),
    );
    debug_assert_eq!(c2 * half * half, dconv2.len());

    let ps = half + 2;
    let mut dconv1 = vec![0.0; act.conv1_out.len()];
    for (p, &src) in act.pool1_arg.iter().enumerate() {
        if act.conv1_out[src] > 0.0 {
            let c = p / (half * half);
            let rem = p % (half * half);
            let (i, j) = (rem / half, rem % half);
            dconv1[src] += dpool1_padded[(c * ps + i + 1) * ps + j + 1];
        }
    }
    conv3x3_backward(&act.input_padded, 1, s, &w.conv1_w, &dconv1, g_c1w, g_c1b, None);
}

fn split_layout<'a>(buf: &'a mut [f64], layout: &[Range<usize>; 8]) -> [&'a mut [f64]; 8] {
    let mut rest = buf;
    let mut parts: Vec<&'a mut [f64]> = Vec::with_capacity(8);
    for r in layout {
        let (head, tail) = rest.split_at_mut(r.len());
        parts.push(head);
        rest = tail;
    }
    parts.try_into().expect("eight layers")
}

/// Gradient of the mean batch loss, laid out like [`CnnModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

/// Mean cross-entropy of a batch and its gradient by backpropagation.
pub fn loss_and_gradients(model: &CnnModel, batch: &[(Spectrogram, usize)]) -> Result<(f64, Gradients)> {
    let inputs = batch
        .iter()
        .map(|(s, c)| Ok((model.input_plane(s)?, *c)))
        .collect::<Result<Vec<_>>>()?;
    for &(_, c) in &inputs {
        check_class(model, c)?;
    }
    let weights = Weights::new(model);
    let mut grad = vec![0.0; model.params.len()];
    let (loss, _) = accumulate_batch(model, &weights, inputs.iter().map(|(x, c)| (x.as_slice(), *c)), batch.len(), &mut grad);
    Ok((loss, Gradients(grad)))
}

fn check_class(model: &CnnModel, class: usize) -> Result<()> {
    if class >= model.classes() {
        return Err(Error::ClassCountMismatch {
            model: model.classes(),
            expected: class + 1,
        });
    }
    Ok(())
}

/// Returns (mean loss, correct predictions).
fn accumulate_batch<'a>(
    model: &CnnModel,
    weights: &Weights,
    batch: impl Iterator<Item = (&'a [f64], usize)>,
    batch_len: usize,
    grad: &mut [f64],
) -> (f64, usize) {
    let scale = 1.0 / batch_len as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    for (input, class) in batch {
        let act = forward_pass(&model.arch, weights, input);
        loss += cross_entropy(&act.probs, class);
        if argmax(&act.probs) == class {
            correct += 1;
        }
        backward_pass(&model.arch, weights, &act, class, scale, grad);
    }
    (loss * scale, correct)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Train a grouped model over merged classes instead of the six labels.
    pub class_merge: Option<ClassMerge>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            class_merge: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.class_merge.as_ref().map_or(crate::TouchLabel::COUNT, ClassMerge::groups)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of the initial model.
    pub initial_loss: f64,
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    pub test_accuracy: f64,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_loss.last().expect("at least one epoch")
    }
}

fn mean_loss_and_accuracy(model: &CnnModel, weights: &Weights, data: &[(Vec<f64>, usize)]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, c) in data {
        let probs = forward_pass(&model.arch, weights, x).probs;
        loss += cross_entropy(&probs, *c);
        correct += usize::from(argmax(&probs) == *c);
    }
    let n = data.len() as f64;
    (loss / n, correct as f64 / n)
}

/// SGD with momentum over in-memory examples. `arch.classes` must cover
/// every class index.
pub fn train_examples(
    arch: Architecture,
    train: &[(Spectrogram, usize)],
    test: &[(Spectrogram, usize)],
    config: &TrainConfig,
) -> Result<(CnnModel, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("Train"));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("Test"));
    }
    let started = Instant::now();
    let mut model = CnnModel::init(arch, config.seed)?;
    let to_planes = |set: &[(Spectrogram, usize)]| {
        set.iter()
            .map(|(s, c)| {
                check_class(&model, *c)?;
                Ok((model.input_plane(s)?, *c))
            })
            .collect::<Result<Vec<_>>>()
    };
    let train = to_planes(train)?;
    let test = to_planes(test)?;

    let initial_loss = mean_loss_and_accuracy(&model, &Weights::new(&model), &train).0;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(config.seed));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut velocity = vec![0.0f64; model.params.len()];
    let mut grad = vec![0.0f64; model.params.len()];
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut epoch_accuracy = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let weights = Weights::new(&model);
            grad.iter_mut().for_each(|g| *g = 0.0);
            let (loss, hits) = accumulate_batch(
                &model,
                &weights,
                batch.iter().map(|&i| (train[i].0.as_slice(), train[i].1)),
                batch.len(),
                &mut grad,
            );
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            for ((w, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v + g;
                *w = (f64::from(*w) - config.learning_rate * *v) as f32;
            }
        }
        epoch_loss.push(loss_sum / train.len() as f64);
        epoch_accuracy.push(correct as f64 / train.len() as f64);
    }
    if model.params.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteWeights);
    }

    let test_accuracy = mean_loss_and_accuracy(&model, &Weights::new(&model), &test).1;
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_loss,
            epoch_accuracy,
            test_accuracy,
            wall_time: started.elapsed(),
        },
    ))
}

fn splitmix(seed: u64) -> u64 {
    crate::synth::splitmix64(seed ^ 0x5452_4149_4E00_0000)
}

/// Class index of a manifest entry: its label, or its merge group.
pub fn class_index(label: crate::TouchLabel, merge: Option<&ClassMerge>) -> usize {
    merge.map_or(label.index(), |m| m.group_of(label.index()))
}

/// Preprocessed spectrograms and class indices of every entry in `split`.
pub fn load_examples(
    manifest: &DatasetManifest,
    base_dir: &Path,
    split: Split,
    pipeline: &SignalPipeline,
    merge: Option<&ClassMerge>,
) -> Result<Vec<(Spectrogram, usize)>> {
    manifest
        .entries_in(split)
        .map(|e| {
            let clip = read_wav(DatasetManifest::resolve(base_dir, e))?;
            Ok((pipeline.spectrogram(&clip)?, class_index(e.label, merge)))
        })
        .collect()
}

/// Loads the manifest's Train and Test splits and trains the standard model.
pub fn train(
    manifest: &DatasetManifest,
    base_dir: &Path,
    pipeline: &SignalPipeline,
    config: &TrainConfig,
) -> Result<(CnnModel, TrainReport)> {
    config.validate()?;
    let merge = config.class_merge.as_ref();
    let train_set = load_examples(manifest, base_dir, Split::Train, pipeline, merge)?;
    let test_set = load_examples(manifest, base_dir, Split::Test, pipeline, merge)?;
    train_examples(Architecture::standard(config.classes()), &train_set, &test_set, config)
}

pub fn encode_model(model: &CnnModel) -> Result<Vec<u8>> {
    if model.arch != Architecture::standard(model.classes()) {
        return Err(Error::InvalidConfig("only the standard architecture can be serialized".into()));
    }
    let mut out = Vec::with_capacity(12 + 4 * model.params.len());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.classes() as u32).to_le_bytes());
    for w in &model.params {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<CnnModel> {
    let found = bytes.len() as u64;
    if bytes.len() < 12 {
        if bytes.len() >= 4 && bytes[..4] != MODEL_MAGIC {
            return Err(Error::BadMagic(bytes[..4].try_into().expect("4 bytes")));
        }
        return Err(Error::SizeMismatch { expected: 12, found });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let classes = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let arch = Architecture::standard(classes);
    arch.validate()?;
    let expected = 12 + 4 * arch.parameter_count() as u64;
    if found != expected {
        return Err(Error::SizeMismatch { expected, found });
    }
    let params: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if params.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteWeights);
    }
    Ok(CnnModel { arch, params })
}

pub fn save_model(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CnnModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrogram::Grid;

    fn spectrogram(side: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..side * side).map(|_| rng.random_range(-80.0..0.0)).collect();
        Spectrogram {
            values: Grid::from_vec(side, side, data).unwrap(),
            floor_db: -80.0,
            freq_resolution_hz: 43.0,
            hop_s: 0.0058,
        }
    }

    #[test]
    fn standard_parameter_count() {
        assert_eq!(Architecture::standard(6).parameter_count(), 263_846);
    }

    #[test]
    fn init_is_seeded() {
        let a = init_model(1, 6).unwrap();
        assert_eq!(a, init_model(1, 6).unwrap());
        assert_ne!(a.parameters(), init_model(2, 6).unwrap().parameters());
        assert_eq!(a.forward(&spectrogram(64, 0)).unwrap().len(), 6);
        assert!(init_model(1, 1).is_err());
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut m = init_model(3, 6).unwrap();
        let (w, b) = m.output_layer_mut();
        w.fill(0.0);
        b.fill(0.0);
        let p = m.forward(&spectrogram(64, 1)).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-12));
        let (loss, _) = loss_and_gradients(&m, &[(spectrogram(64, 2), 4)]).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn wrong_shape_rejected() {
        let m = init_model(0, 6).unwrap();
        let mut s = spectrogram(64, 0);
        s.values = Grid::filled(63, 64, -10.0);
        assert!(matches!(m.forward(&s), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn confident_prediction_has_tiny_loss() {
        let mut m = init_model(5, 6).unwrap();
        let (w, b) = m.output_layer_mut();
        w.fill(0.0);
        b.fill(0.0);
        b[2] = 40.0;
        let (loss, _) = loss_and_gradients(&m, &[(spectrogram(64, 3), 2)]).unwrap();
        assert!(loss <= 1e-6);
    }

    #[test]
    fn model_file_errors() {
        let m = init_model(0, 6).unwrap();
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..4], b"TSM1");
        assert_eq!(decode_model(&bytes).unwrap(), m);
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1]),
            Err(Error::SizeMismatch { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(decode_model(&v2), Err(Error::VersionMismatch(2))));
    }
}
