//! Adversarial debiasing by gradient reversal.
//!
//! A linear adversary reads the main head's softmax output `q` and
//! predicts the sensitive attribute. Per mini-batch the adversary takes
//! `adv_steps_per_main` SGD steps on its cross-entropy, then the main head
//! takes one step on
//!
//!   class CE + elastic net − β · adversary CE,
//!
//! where the adversary term is differentiated through `q` with the
//! adversary held fixed. For one sample with adversary weights `A` (2 x C)
//! and residual `e = softmax(A q + a) − onehot(g)`, the reversed term adds
//! `−β · q ⊙ (v − q·v)` to `dL/dz`, with `v = Aᵀ e`.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{ActivationMatrix, InputKind, LinearHead};
use crate::error::{Error, Result};
use crate::explain::{all_class_shifts, ShiftReport};
use crate::heads::{
    accumulate_ce, train_with_hooks, EpochRecord, HeadParams, Samples, TrainConfig, TrainHooks, TrainTrace,
};
use crate::linalg;
use crate::rng::{derive_seed, stream_rng};

const ADVERSARY_STREAM: u64 = 0xAD7E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvConfig {
    /// Weight of the reversed adversary loss.
    pub beta: f64,
    pub adv_steps_per_main: usize,
    pub adv_learning_rate: f64,
    /// Epochs before the reversed term enters the main head's gradient.
    pub warmup_epochs: usize,
    /// Adversary eval accuracy below this after warmup counts towards
    /// collapse.
    pub collapse_threshold: f64,
    pub collapse_epochs: usize,
    pub base: TrainConfig,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            adv_steps_per_main: 1,
            adv_learning_rate: 0.1,
            warmup_epochs: 5,
            collapse_threshold: 0.45,
            collapse_epochs: 5,
            base: TrainConfig::default(),
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be >= 0");
        }
        if self.adv_steps_per_main == 0 || self.collapse_epochs == 0 {
            return bad("adversary step and collapse counts must be >= 1");
        }
        if !(self.adv_learning_rate > 0.0 && self.adv_learning_rate.is_finite()) {
            return bad("adv_learning_rate must be > 0");
        }
        Ok(())
    }
}

/// Logistic adversary over a C-vector of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Adversary {
    n_classes: usize,
    /// Row-major 2 x C.
    pub w: Vec<f64>,
    pub b: [f64; 2],
}

impl Adversary {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            n_classes,
            w: vec![0.0; 2 * n_classes],
            b: [0.0; 2],
        }
    }

    fn init(n_classes: usize, seed: u64) -> Self {
        let mut rng = stream_rng(derive_seed(seed, ADVERSARY_STREAM), 0);
        let bound = (6.0 / n_classes as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            n_classes,
            w: (0..2 * n_classes).map(|_| dist.sample(&mut rng)).collect(),
            b: [0.0; 2],
        }
    }

    /// Softmax over the two outputs.
    pub fn probs(&self, q: &[f64]) -> [f64; 2] {
        let c = self.n_classes;
        let mut u = [self.b[0], self.b[1]];
        for (g, ug) in u.iter_mut().enumerate() {
            *ug += linalg::dot64(&self.w[g * c..(g + 1) * c], q);
        }
        let m = u[0].max(u[1]);
        let e = [(u[0] - m).exp(), (u[1] - m).exp()];
        let s = e[0] + e[1];
        [e[0] / s, e[1] / s]
    }

    pub fn predict(&self, q: &[f64]) -> u8 {
        let p = self.probs(q);
        u8::from(p[1] > p[0])
    }

    /// `d(adversary CE)/dq` for one sample.
    fn grad_q(&self, q: &[f64], g: u8) -> Vec<f64> {
        let c = self.n_classes;
        let mut e = self.probs(q);
        e[g as usize] -= 1.0;
        (0..c).map(|k| self.w[k] * e[0] + self.w[c + k] * e[1]).collect()
    }

    pub fn to_head(&self) -> Result<LinearHead> {
        LinearHead::new(
            2,
            self.n_classes,
            self.w.iter().map(|&v| v as f32).collect(),
            vec![self.b[0] as f32, self.b[1] as f32],
            InputKind::ConceptActivation,
        )
    }
}

fn main_probs(params: &HeadParams, x: &[f32], z: &mut [f64]) {
    params.logits_into(x, z);
    linalg::softmax_in_place(z);
}

/// Reverse the adversary gradient into `dz` in place.
fn reverse_into(adv: &Adversary, q: &[f64], g: u8, beta: f64, dz: &mut [f64]) {
    let v = adv.grad_q(q, g);
    let qv = linalg::dot64(q, &v);
    for ((d, &qk), &vk) in dz.iter_mut().zip(q).zip(&v) {
        *d -= beta * qk * (vk - qv);
    }
}

/// Mean class CE − β · mean adversary CE on `rows`, with its gradient in
/// the main head's parameters (adversary fixed, no penalty).
pub fn debiased_objective_and_gradient(
    params: &HeadParams,
    adv: &Adversary,
    data: Samples<'_>,
    sensitive: &[u8],
    rows: &[usize],
    beta: f64,
) -> (f64, HeadParams) {
    let mut grad = HeadParams::zeros(params.n_outputs(), params.n_inputs());
    let mut adv_loss = 0.0;
    let ce = accumulate_ce(params, data, rows, &mut grad, &mut |r, q, dz| {
        let p = adv.probs(q);
        adv_loss -= p[sensitive[r] as usize].ln();
        reverse_into(adv, q, sensitive[r], beta, dz);
    });
    let n = rows.len() as f64;
    grad.scale(1.0 / n);
    ((ce - beta * adv_loss) / n, grad)
}

/// Adversary accuracy over all rows of `data`.
fn adversary_accuracy(params: &HeadParams, adv: &Adversary, data: Samples<'_>, sensitive: &[u8]) -> f64 {
    let mut z = vec![0.0; params.n_outputs()];
    let hits = (0..data.len())
        .filter(|&r| {
            main_probs(params, data.inputs.row(r), &mut z);
            adv.predict(&z) == sensitive[r]
        })
        .count();
    hits as f64 / data.len() as f64
}

struct AdvHooks<'a> {
    cfg: &'a AdvConfig,
    train: Samples<'a>,
    sensitive: &'a [u8],
    eval: Option<(Samples<'a>, &'a [u8])>,
    adv: Adversary,
    low_streak: usize,
}

impl TrainHooks for AdvHooks<'_> {
    fn before_step(&mut self, epoch: usize, rows: &[usize], params: &HeadParams) -> Result<()> {
        let c = params.n_outputs();
        let mut z = vec![0.0; c];
        let scale = self.cfg.adv_learning_rate / rows.len() as f64;
        for _ in 0..self.cfg.adv_steps_per_main {
            let mut gw = vec![0.0; 2 * c];
            let mut gb = [0.0; 2];
            for &r in rows {
                main_probs(params, self.train.inputs.row(r), &mut z);
                let mut e = self.adv.probs(&z);
                e[self.sensitive[r] as usize] -= 1.0;
                for g in 0..2 {
                    gb[g] += e[g];
                    for (w, &q) in gw[g * c..(g + 1) * c].iter_mut().zip(&z) {
                        *w += e[g] * q;
                    }
                }
            }
            for (w, g) in self.adv.w.iter_mut().zip(&gw) {
                *w -= scale * g;
            }
            for (b, g) in self.adv.b.iter_mut().zip(&gb) {
                *b -= scale * g;
            }
        }
        if self.adv.w.iter().chain(&self.adv.b).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        Ok(())
    }

    fn adjusting(&self, epoch: usize) -> bool {
        self.cfg.beta > 0.0 && epoch >= self.cfg.warmup_epochs
    }

    fn adjust(&mut self, row: usize, probs: &[f64], dz: &mut [f64]) {
        reverse_into(&self.adv, probs, self.sensitive[row], self.cfg.beta, dz);
    }

    fn end_epoch(&mut self, epoch: usize, params: &HeadParams, rec: &mut EpochRecord) -> Result<()> {
        let (data, sens) = self.eval.unwrap_or((self.train, self.sensitive));
        let acc = adversary_accuracy(params, &self.adv, data, sens);
        rec.adversary_eval_accuracy = Some(acc);
        if epoch >= self.cfg.warmup_epochs && acc < self.cfg.collapse_threshold {
            self.low_streak += 1;
            if self.low_streak >= self.cfg.collapse_epochs {
                return Err(Error::AdversaryCollapsed {
                    threshold: self.cfg.collapse_threshold,
                    epochs: self.low_streak,
                });
            }
        } else {
            self.low_streak = 0;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialResult {
    pub head: LinearHead,
    /// 2 x C head over class probabilities.
    pub adversary: LinearHead,
    pub trace: TrainTrace,
}

fn check_sensitive(s: &[u8], n: usize) -> Result<()> {
    if s.len() != n {
        return Err(Error::LengthMismatch {
            what: "sensitive",
            expected: n,
            found: s.len(),
        });
    }
    if let Some(&v) = s.iter().find(|&&v| v > 1) {
        return Err(Error::BadSensitive(v));
    }
    Ok(())
}

/// Jointly train a head and its adversary. With `beta = 0` the head is
/// bit-identical to [`crate::heads::train_head`] under the same base config.
pub fn train_adversarial(
    train: Samples<'_>,
    train_sensitive: &[u8],
    n_classes: usize,
    eval: Option<(Samples<'_>, &[u8])>,
    cfg: &AdvConfig,
    kind: InputKind,
) -> Result<AdversarialResult> {
    cfg.validate()?;
    check_sensitive(train_sensitive, train.len())?;
    for v in 0..2u8 {
        if !train_sensitive.contains(&v) {
            return Err(Error::MissingSensitiveValue(v));
        }
    }
    if let Some((e, s)) = eval {
        check_sensitive(s, e.len())?;
    }
    let mut hooks = AdvHooks {
        cfg,
        train,
        sensitive: train_sensitive,
        eval,
        adv: Adversary::init(n_classes, cfg.base.seed),
        low_streak: 0,
    };
    let (params, trace) = train_with_hooks(train, n_classes, eval.map(|e| e.0), &cfg.base, kind, &mut hooks)?;
    Ok(AdversarialResult {
        head: params.to_head(kind)?,
        adversary: hooks.adv.to_head()?,
        trace,
    })
}

/// Class-averaged contribution shifts between the plain and the debiased
/// head, for every class.
pub fn debias_report(
    before: &LinearHead,
    after: &LinearHead,
    acts: &ActivationMatrix,
    truth: Option<&[usize]>,
) -> Result<Vec<ShiftReport>> {
    all_class_shifts(before, after, acts, truth)
}
