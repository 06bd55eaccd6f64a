//! Linear classification heads: the sparse concept head trained with an
//! elastic-net penalty, the dense embedding head, and zero-shot argmax.
//!
//! The training objective per mini-batch is the mean cross-entropy plus
//! `lambda * ((1 - alpha) * 0.5 * |W|_2^2 + alpha * |W|_1)`. With
//! `proximal` the L1 part is applied as a soft-threshold after each SGD
//! step, which produces exact zeros; only the smooth part enters the
//! gradient. The bias is never penalised.

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bottleneck::compute_activations;
use crate::data::{DatasetLabels, EmbeddingMatrix, InputKind, LinearHead, MatrixView, Split};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    KaimingUniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub proximal: bool,
    /// Stop when eval accuracy has not improved for this many epochs.
    /// Only used when an eval set is supplied.
    pub patience: Option<usize>,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 800,
            epochs: 100,
            lambda: 1e-3,
            alpha: 0.99,
            seed: 0,
            proximal: true,
            patience: Some(10),
            init: Init::KaimingUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's mini-batches.
    pub loss: f64,
    /// Penalty value at the end of the epoch.
    pub penalty: f64,
    /// Nonzero weights per output, averaged over outputs.
    pub mean_nonzero_weights: f64,
    /// Accuracy on the eval set, or on the train set when none is given.
    pub eval_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary_eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainTrace {
    /// Full-data objective (mean cross-entropy + penalty) at initialisation.
    pub initial_objective: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Inputs with their class labels.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: MatrixView<'a>,
    pub labels: &'a [usize],
}

impl<'a> Samples<'a> {
    pub fn new(inputs: MatrixView<'a>, labels: &'a [usize], n_classes: usize) -> Result<Self> {
        if inputs.n_rows != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: inputs.n_rows,
                found: labels.len(),
            });
        }
        if let Some(&index) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::ClassOutOfRange { index, n_classes });
        }
        if let Some(index) = inputs.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Owned copy of the rows of `inputs` listed in `rows`, row-major.
pub fn gather_rows(inputs: MatrixView<'_>, rows: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows.len() * inputs.n_cols);
    for &r in rows {
        out.extend_from_slice(inputs.row(r));
    }
    out
}

/// Owned rows of one split with their class and sensitive labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub rows: Vec<usize>,
    pub inputs: Vec<f32>,
    pub n_cols: usize,
    pub labels: Vec<usize>,
    pub sensitive: Vec<u8>,
}

impl SplitData {
    pub fn new(inputs: MatrixView<'_>, d: &DatasetLabels, split: Split) -> Result<Self> {
        if inputs.n_rows != d.len() {
            return Err(Error::LengthMismatch {
                what: "input rows",
                expected: d.len(),
                found: inputs.n_rows,
            });
        }
        let rows = d.indices(split);
        Ok(Self {
            inputs: gather_rows(inputs, &rows),
            n_cols: inputs.n_cols,
            labels: rows.iter().map(|&r| d.class_label()[r]).collect(),
            sensitive: rows.iter().map(|&r| d.sensitive()[r]).collect(),
            rows,
        })
    }

    pub fn samples(&self, n_classes: usize) -> Result<Samples<'_>> {
        Samples::new(MatrixView::new(&self.inputs, self.rows.len(), self.n_cols)?, &self.labels, n_classes)
    }
}

/// Trainable parameters in f64, stored input-major so that a sparse input
/// row touches contiguous weight slices.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    n_outputs: usize,
    n_inputs: usize,
    wt: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(n_outputs: usize, n_inputs: usize) -> Self {
        Self {
            n_outputs,
            n_inputs,
            wt: vec![0.0; n_outputs * n_inputs],
            bias: vec![0.0; n_outputs],
        }
    }

    pub fn from_head(h: &LinearHead) -> Self {
        let mut p = Self::zeros(h.n_outputs(), h.n_inputs());
        for c in 0..h.n_outputs() {
            for j in 0..h.n_inputs() {
                p.set_weight(c, j, h.weight(c, j) as f64);
            }
        }
        p.bias = h.bias().iter().map(|&b| b as f64).collect();
        p
    }

    pub fn to_head(&self, kind: InputKind) -> Result<LinearHead> {
        let mut w = Vec::with_capacity(self.wt.len());
        for c in 0..self.n_outputs {
            for j in 0..self.n_inputs {
                w.push(self.weight(c, j) as f32);
            }
        }
        LinearHead::new(
            self.n_outputs,
            self.n_inputs,
            w,
            self.bias.iter().map(|&b| b as f32).collect(),
            kind,
        )
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    #[inline]
    pub fn weight(&self, output: usize, input: usize) -> f64 {
        self.wt[input * self.n_outputs + output]
    }

    #[inline]
    pub fn set_weight(&mut self, output: usize, input: usize, v: f64) {
        self.wt[input * self.n_outputs + output] = v;
    }

    /// All weights, input-major.
    pub fn weights_input_major(&self) -> &[f64] {
        &self.wt
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.wt.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }

    fn fill_zero(&mut self) {
        self.wt.iter_mut().for_each(|w| *w = 0.0);
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    /// `out = W x + b`, skipping zero inputs.
    pub fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let v = v as f64;
                let col = &self.wt[j * self.n_outputs..(j + 1) * self.n_outputs];
                for (o, w) in out.iter_mut().zip(col) {
                    *o += w * v;
                }
            }
        }
    }

    /// Accumulate `dz x^T` into the weight gradient and `dz` into the bias.
    pub(crate) fn add_outer(&mut self, x: &[f32], dz: &[f64]) {
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let v = v as f64;
                let col = &mut self.wt[j * self.n_outputs..(j + 1) * self.n_outputs];
                for (g, d) in col.iter_mut().zip(dz) {
                    *g += d * v;
                }
            }
        }
        for (g, d) in self.bias.iter_mut().zip(dz) {
            *g += d;
        }
    }

    pub fn penalty(&self, lambda: f64, alpha: f64) -> f64 {
        penalty_of(self.wt.iter().copied(), lambda, alpha)
    }

    pub fn mean_nonzero(&self) -> f64 {
        self.wt.iter().filter(|w| **w != 0.0).count() as f64 / self.n_outputs as f64
    }

    fn all_finite(&self) -> bool {
        self.wt.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

fn penalty_of(weights: impl Iterator<Item = f64>, lambda: f64, alpha: f64) -> f64 {
    let (mut sq, mut abs) = (0.0, 0.0);
    for w in weights {
        sq += w * w;
        abs += w.abs();
    }
    lambda * ((1.0 - alpha) * 0.5 * sq + alpha * abs)
}

/// `lambda * ((1 - alpha) * 0.5 * sum w^2 + alpha * sum |w|)`.
pub fn elastic_net_penalty(weights: &[f32], lambda: f64, alpha: f64) -> f64 {
    penalty_of(weights.iter().map(|&w| w as f64), lambda, alpha)
}

/// Proximal operator of `threshold * |w|`.
#[inline]
pub fn soft_threshold(w: f64, threshold: f64) -> f64 {
    if w > threshold {
        w - threshold
    } else if w < -threshold {
        w + threshold
    } else {
        0.0
    }
}

/// Uniform He initialisation on `[-sqrt(6/n_in), sqrt(6/n_in)]`, zero bias.
pub fn init_kaiming_uniform(n_out: usize, n_in: usize, seed: u64, kind: InputKind) -> Result<LinearHead> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kaiming_with(&mut rng, n_out, n_in, kind)
}

fn kaiming_with(rng: &mut ChaCha8Rng, n_out: usize, n_in: usize, kind: InputKind) -> Result<LinearHead> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidParameter("head dimensions must be >= 1".into()));
    }
    let bound = (6.0 / n_in as f64).sqrt() as f32;
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let w = (0..n_out * n_in).map(|_| dist.sample(rng)).collect();
    LinearHead::new(n_out, n_in, w, vec![0.0; n_out], kind)
}

/// Per-sample hook on `dL/dz`: (row, softmax probabilities, dz).
pub(crate) type LogitGradAdjust<'a> = dyn FnMut(usize, &[f64], &mut [f64]) + 'a;

/// Sum of per-sample cross-entropy over `rows`, accumulating the gradient
/// of the summed loss into `grad`. `adjust` may rewrite `dL/dz` per sample
/// (it gets the row index and softmax probabilities).
pub(crate) fn accumulate_ce(
    params: &HeadParams,
    data: Samples<'_>,
    rows: &[usize],
    grad: &mut HeadParams,
    adjust: &mut LogitGradAdjust<'_>,
) -> f64 {
    let c = params.n_outputs;
    let mut z = vec![0.0; c];
    let mut dz = vec![0.0; c];
    let mut loss = 0.0;
    for &r in rows {
        let x = data.inputs.row(r);
        params.logits_into(x, &mut z);
        let y = data.labels[r];
        loss += linalg::log_sum_exp(&z) - z[y];
        linalg::softmax_in_place(&mut z);
        dz.copy_from_slice(&z);
        dz[y] -= 1.0;
        adjust(r, &z, &mut dz);
        grad.add_outer(x, &dz);
    }
    loss
}

/// Smooth part of the objective on `rows`: mean cross-entropy plus the L2
/// half of the penalty, with its exact gradient.
pub fn smooth_objective_and_gradient(
    params: &HeadParams,
    data: Samples<'_>,
    rows: &[usize],
    lambda: f64,
    alpha: f64,
) -> (f64, HeadParams) {
    let mut grad = HeadParams::zeros(params.n_outputs, params.n_inputs);
    let loss = accumulate_ce(params, data, rows, &mut grad, &mut |_, _, _| {});
    let n = rows.len() as f64;
    let l2 = lambda * (1.0 - alpha);
    for (g, w) in grad.wt.iter_mut().zip(&params.wt) {
        *g = *g / n + l2 * w;
    }
    grad.bias.iter_mut().for_each(|g| *g /= n);
    let sq: f64 = params.wt.iter().map(|w| w * w).sum();
    (loss / n + 0.5 * l2 * sq, grad)
}

/// Mean cross-entropy of `params` on `rows`.
pub fn mean_cross_entropy(params: &HeadParams, data: Samples<'_>, rows: &[usize]) -> f64 {
    let c = params.n_outputs;
    let mut z = vec![0.0; c];
    let total: f64 = rows
        .iter()
        .map(|&r| {
            params.logits_into(data.inputs.row(r), &mut z);
            linalg::log_sum_exp(&z) - z[data.labels[r]]
        })
        .sum();
    total / rows.len() as f64
}

fn accuracy_of(params: &HeadParams, data: Samples<'_>) -> f64 {
    let c = params.n_outputs;
    let correct: usize = par::map_range(data.len(), |r| {
        let mut z = vec![0.0; c];
        params.logits_into(data.inputs.row(r), &mut z);
        usize::from(linalg::argmax(&z) == data.labels[r])
    })
    .into_iter()
    .sum();
    correct as f64 / data.len() as f64
}

/// Extension points used by adversarial training. The default methods
/// give plain training.
pub(crate) trait TrainHooks {
    /// Called before every main-head step with the batch rows.
    fn before_step(&mut self, _epoch: usize, _rows: &[usize], _params: &HeadParams) -> Result<()> {
        Ok(())
    }

    /// Whether `adjust` should run this epoch.
    fn adjusting(&self, _epoch: usize) -> bool {
        false
    }

    fn adjust(&mut self, _row: usize, _probs: &[f64], _dz: &mut [f64]) {}

    fn end_epoch(&mut self, _epoch: usize, _params: &HeadParams, _rec: &mut EpochRecord) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct Plain;
impl TrainHooks for Plain {}

pub(crate) fn train_with_hooks(
    train: Samples<'_>,
    n_classes: usize,
    eval: Option<Samples<'_>>,
    cfg: &TrainConfig,
    kind: InputKind,
    hooks: &mut dyn TrainHooks,
) -> Result<(HeadParams, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if n_classes < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    let n_in = train.inputs.n_cols;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match cfg.init {
        Init::KaimingUniform => HeadParams::from_head(&kaiming_with(&mut rng, n_classes, n_in, kind)?),
        Init::Zeros => HeadParams::zeros(n_classes, n_in),
    };
    let all: Vec<usize> = (0..train.len()).collect();
    let mut trace = TrainTrace {
        initial_objective: mean_cross_entropy(&params, train, &all) + params.penalty(cfg.lambda, cfg.alpha),
        epochs: Vec::new(),
    };

    let mut grad = HeadParams::zeros(n_classes, n_in);
    let mut order = all.clone();
    let l2 = cfg.lambda * (1.0 - cfg.alpha);
    let l1 = cfg.lambda * cfg.alpha;
    let lr = cfg.learning_rate;
    let mut best_eval = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let adjusting = hooks.adjusting(epoch);
        for batch in order.chunks(cfg.batch_size) {
            hooks.before_step(epoch, batch, &params)?;
            grad.fill_zero();
            let loss = if adjusting {
                accumulate_ce(&params, train, batch, &mut grad, &mut |r, p, dz| hooks.adjust(r, p, dz))
            } else {
                accumulate_ce(&params, train, batch, &mut grad, &mut |_, _, _| {})
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            for (w, g) in params.wt.iter_mut().zip(&grad.wt) {
                let mut step = g * scale + l2 * *w;
                if !cfg.proximal {
                    step += l1 * w.signum() * f64::from(u8::from(*w != 0.0));
                }
                *w -= lr * step;
                if cfg.proximal {
                    *w = soft_threshold(*w, lr * l1);
                }
            }
            for (b, g) in params.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g * scale;
            }
        }
        if !params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        let eval_accuracy = accuracy_of(&params, eval.unwrap_or(train));
        let mut rec = EpochRecord {
            epoch,
            loss: epoch_loss / train.len() as f64,
            penalty: params.penalty(cfg.lambda, cfg.alpha),
            mean_nonzero_weights: params.mean_nonzero(),
            eval_accuracy,
            adversary_eval_accuracy: None,
        };
        hooks.end_epoch(epoch, &params, &mut rec)?;
        trace.epochs.push(rec);
        if let (Some(p), Some(_)) = (cfg.patience, eval) {
            if eval_accuracy > best_eval {
                best_eval = eval_accuracy;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= p {
                    break;
                }
            }
        }
    }
    Ok((params, trace))
}

/// Train a head with cross-entropy + elastic net by mini-batch SGD.
pub fn train_head(
    train: Samples<'_>,
    n_classes: usize,
    eval: Option<Samples<'_>>,
    cfg: &TrainConfig,
    kind: InputKind,
) -> Result<(LinearHead, TrainTrace)> {
    let (params, trace) = train_with_hooks(train, n_classes, eval, cfg, kind, &mut Plain)?;
    Ok((params.to_head(kind)?, trace))
}

/// Dense head on image embeddings: `train_head` with the penalty off.
pub fn train_dense_head(
    train: Samples<'_>,
    n_classes: usize,
    eval: Option<Samples<'_>>,
    cfg: &TrainConfig,
) -> Result<(LinearHead, TrainTrace)> {
    let cfg = TrainConfig {
        lambda: 0.0,
        ..cfg.clone()
    };
    train_head(train, n_classes, eval, &cfg, InputKind::ImageEmbedding)
}

/// Logits (row-major, rows x outputs) and argmax labels.
pub fn predict(head: &LinearHead, inputs: MatrixView<'_>) -> Result<(Vec<f64>, Vec<usize>)> {
    if inputs.n_cols != head.n_inputs() {
        return Err(Error::Shape(format!(
            "head expects {} inputs, got {}",
            head.n_inputs(),
            inputs.n_cols
        )));
    }
    let c = head.n_outputs();
    let rows: Vec<Vec<f64>> = par::map_range(inputs.n_rows, |i| {
        let x = inputs.row(i);
        (0..c).map(|k| head.logit(k, x)).collect()
    });
    let labels = rows.iter().map(|z| linalg::argmax(z)).collect();
    Ok((rows.concat(), labels))
}

pub fn predict_labels(head: &LinearHead, inputs: MatrixView<'_>) -> Result<Vec<usize>> {
    predict(head, inputs).map(|(_, l)| l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
}

/// F1 of `preds` against `labels`. Macro averages over classes that occur
/// in either.
pub fn f1_score(preds: &[usize], labels: &[usize], average: F1Average) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: labels.len(),
            found: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    match average {
        // Single-label: micro precision = micro recall = accuracy.
        F1Average::Micro => Ok(correct as f64 / preds.len() as f64),
        F1Average::Macro => {
            let n = preds.iter().chain(labels).max().unwrap() + 1;
            let mut tp = vec![0usize; n];
            let mut pred_n = vec![0usize; n];
            let mut true_n = vec![0usize; n];
            for (&p, &l) in preds.iter().zip(labels) {
                pred_n[p] += 1;
                true_n[l] += 1;
                if p == l {
                    tp[p] += 1;
                }
            }
            let mut sum = 0.0;
            let mut k = 0;
            for c in 0..n {
                if pred_n[c] + true_n[c] == 0 {
                    continue;
                }
                k += 1;
                sum += 2.0 * tp[c] as f64 / (pred_n[c] + true_n[c]) as f64;
            }
            Ok(sum / k as f64)
        }
    }
}

pub fn evaluate(preds: &[usize], labels: &[usize]) -> Result<Scores> {
    let f1 = f1_score(preds, labels, F1Average::Micro)?;
    Ok(Scores { accuracy: f1, f1 })
}

/// Argmax over classes of cosine(image, class text).
pub fn zero_shot_predict(images: &EmbeddingMatrix, class_text: &EmbeddingMatrix) -> Result<Vec<usize>> {
    let sims = compute_activations(images, class_text)?;
    Ok(sims
        .rows()
        .map(|r| {
            let z: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            linalg::argmax(&z)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(v: &[f32], n: usize, m: usize) -> MatrixView<'_> {
        MatrixView::new(v, n, m).unwrap()
    }

    #[test]
    fn kaiming_bounds_and_determinism() {
        let h = init_kaiming_uniform(7, 24, 3, InputKind::ConceptActivation).unwrap();
        let bound = (6.0f64 / 24.0).sqrt() as f32;
        assert!(h.weights().iter().all(|w| w.abs() <= bound));
        assert!(h.bias().iter().all(|b| *b == 0.0));
        assert_eq!(h, init_kaiming_uniform(7, 24, 3, InputKind::ConceptActivation).unwrap());
        assert_ne!(h, init_kaiming_uniform(7, 24, 4, InputKind::ConceptActivation).unwrap());
    }

    #[test]
    fn kaiming_mean_within_three_standard_errors() {
        // Uniform(-a, a): variance a^2 / 3.
        let h = init_kaiming_uniform(2, 50_000, 11, InputKind::ConceptActivation).unwrap();
        let bound = (6.0f64 / 50_000.0).sqrt();
        let n = h.weights().len() as f64;
        let mean = h.weights().iter().map(|&w| w as f64).sum::<f64>() / n;
        let se = bound / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn penalty_hand_cases() {
        assert_eq!(elastic_net_penalty(&[0.0, 0.0], 1e-3, 0.99), 0.0);
        let p = elastic_net_penalty(&[2.0], 1e-3, 0.99);
        assert!((p - 1e-3 * (0.01 * 0.5 * 4.0 + 0.99 * 2.0)).abs() < 1e-15);
        assert!((p - 2.0e-3).abs() < 1e-15);
        assert_eq!(elastic_net_penalty(&[1.5, -2.5], 0.1, 1.0), 0.1 * 4.0);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(0.5, 0.2), 0.3);
        assert_eq!(soft_threshold(-0.5, 0.2), -0.3);
        assert_eq!(soft_threshold(0.2, 0.2), 0.0);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
    }

    #[test]
    fn predict_hand_cases() {
        let h = LinearHead::new(2, 2, vec![1., 0., 0., 2.], vec![0., 0.], InputKind::ConceptActivation).unwrap();
        let x = [1.0f32, 1.0];
        let (z, l) = predict(&h, view(&x, 1, 2)).unwrap();
        assert_eq!(z, vec![1.0, 2.0]);
        assert_eq!(l, vec![1]);
        let zero = LinearHead::zeros(3, 2, InputKind::ConceptActivation).unwrap();
        let (z, l) = predict(&zero, view(&x, 1, 2)).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert_eq!(l, vec![0]);
        let eye = LinearHead::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0.; 3], InputKind::ConceptActivation).unwrap();
        assert_eq!(predict_labels(&eye, view(&[0., 0., 1.], 1, 3)).unwrap(), vec![2]);
        assert!(predict(&h, view(&[1.0], 1, 1)).is_err());
    }

    #[test]
    fn appending_zero_weight_columns_keeps_logits() {
        let h = LinearHead::new(2, 2, vec![0.3, -1., 0.7, 2.], vec![0.1, -0.2], InputKind::ConceptActivation).unwrap();
        let wide = LinearHead::new(2, 3, vec![0.3, -1., 0., 0.7, 2., 0.], vec![0.1, -0.2], InputKind::ConceptActivation).unwrap();
        let (a, _) = predict(&h, view(&[0.4, 0.9], 1, 2)).unwrap();
        let (b, _) = predict(&wide, view(&[0.4, 0.9, 5.0], 1, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_cases() {
        assert_eq!(evaluate(&[0, 1, 2], &[0, 1, 2]).unwrap(), Scores { accuracy: 1.0, f1: 1.0 });
        assert_eq!(evaluate(&[1, 2, 0], &[0, 1, 2]).unwrap(), Scores { accuracy: 0.0, f1: 0.0 });
        assert_eq!(evaluate(&[0, 1, 1, 1], &[0, 1, 1, 0]).unwrap(), Scores { accuracy: 0.75, f1: 0.75 });
        assert!(evaluate(&[], &[]).is_err());
        // Macro: class 0 F1 = 2/3, class 1 F1 = 0.8.
        let m = f1_score(&[0, 1, 1, 1], &[0, 1, 1, 0], F1Average::Macro).unwrap();
        assert!((m - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_shot_cases() {
        let classes = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap();
        let imgs = EmbeddingMatrix::from_rows(&[vec![0.0, 3.0], vec![1.0, 1.0], vec![3.0, 4.0], vec![4.0, 3.0]], None).unwrap();
        // (3,4): cosines 0.6 / 0.8; (4,3): 0.8 / 0.6; (1,1): tie -> 0.
        assert_eq!(zero_shot_predict(&imgs, &classes).unwrap(), vec![1, 0, 1, 0]);
    }

    #[test]
    fn zero_init_loss_is_ln_c() {
        let x = vec![0.3f32, 0.1, 0.9, 0.4, 0.5, 0.2];
        let labels = [0usize, 2];
        let data = Samples::new(view(&x, 2, 3), &labels, 5).unwrap();
        let p = HeadParams::zeros(5, 3);
        let ce = mean_cross_entropy(&p, data, &[0, 1]);
        assert!((ce - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let x: Vec<f32> = vec![1.0, 0.1, 0.9, 0.2, 0.8, 0.0, 0.1, 1.0, 0.2, 0.9, 0.0, 0.7];
        let labels = [0usize, 0, 0, 1, 1, 1];
        let data = Samples::new(view(&x, 6, 2), &labels, 2).unwrap();
        let cfg = TrainConfig { lambda: 0.0, learning_rate: 0.5, batch_size: 2, epochs: 200, patience: None, ..Default::default() };
        let (h, trace) = train_head(data, 2, None, &cfg, InputKind::ConceptActivation).unwrap();
        assert_eq!(predict_labels(&h, data.inputs).unwrap(), labels.to_vec());
        assert_eq!(trace.epochs.len(), 200);
        let last = trace.last().unwrap();
        assert!(last.loss + last.penalty <= trace.initial_objective);
    }

    #[test]
    fn training_is_deterministic() {
        let x: Vec<f32> = (0..60).map(|i| ((i * 37 % 17) as f32) / 17.0).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let data = Samples::new(view(&x, 20, 3), &labels, 3).unwrap();
        let cfg = TrainConfig { learning_rate: 0.3, batch_size: 7, epochs: 15, seed: 9, ..Default::default() };
        let a = train_head(data, 3, None, &cfg, InputKind::ConceptActivation).unwrap();
        let b = train_head(data, 3, None, &cfg, InputKind::ConceptActivation).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stop_on_plateau() {
        let x: Vec<f32> = vec![1.0, 0.0, 0.0, 1.0];
        let labels = [0usize, 1];
        let data = Samples::new(view(&x, 2, 2), &labels, 2).unwrap();
        let cfg = TrainConfig { learning_rate: 0.5, batch_size: 2, epochs: 100, patience: Some(3), ..Default::default() };
        let (_, trace) = train_head(data, 2, Some(data), &cfg, InputKind::ConceptActivation).unwrap();
        assert!(trace.epochs.len() < 100);
    }

    #[test]
    fn divergence_is_reported() {
        let x: Vec<f32> = vec![1e30, 0.0, 0.0, 1e30];
        let labels = [0usize, 1];
        let data = Samples::new(view(&x, 2, 2), &labels, 2).unwrap();
        let cfg = TrainConfig { learning_rate: 1e300, batch_size: 1, epochs: 5, ..Default::default() };
        let err = train_head(data, 2, None, &cfg, InputKind::ConceptActivation).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
