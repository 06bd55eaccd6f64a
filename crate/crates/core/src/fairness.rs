//! Leakage and bias amplification.
//!
//! Leakage is the eval-split accuracy of an attacker that predicts the
//! sensitive attribute from a class label alone. Dataset leakage feeds it
//! ground-truth labels, model leakage feeds it predictions. Bias
//! amplification compares model leakage with the leakage of a reference
//! model of equal F1 whose errors are pure chance: ground truth with a
//! random fraction of labels replaced.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetLabels, InputKind, LinearHead, Split};
use crate::error::{Error, Result};
use crate::heads::{f1_score, F1Average};
use crate::par;
use crate::rng::{derive_seed, stream_rng};

/// Gradient-descent settings for the leakage attacker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// L2 strength on the per-class weights (bias unpenalised).
    pub l2: f64,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Logistic head over one-hot class labels predicting the sensitive
/// attribute. Output 0 is male, 1 female.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerModel {
    pub head: LinearHead,
    pub config: AttackerConfig,
}

impl AttackerModel {
    /// Predicted sensitive value for a class; ties go to 0.
    pub fn predict(&self, class: usize) -> u8 {
        let z0 = self.head.weight(0, class) as f64 + self.head.bias()[0] as f64;
        let z1 = self.head.weight(1, class) as f64 + self.head.bias()[1] as f64;
        u8::from(z1 > z0)
    }

    /// Accuracy over `rows`.
    pub fn accuracy(&self, class_label: &[usize], sensitive: &[u8], rows: &[usize]) -> f64 {
        let hits = rows
            .iter()
            .filter(|&&r| self.predict(class_label[r]) == sensitive[r])
            .count();
        hits as f64 / rows.len() as f64
    }
}

fn counts(class_label: &[usize], sensitive: &[u8], rows: &[usize], n_classes: usize) -> Vec<[usize; 2]> {
    let mut k = vec![[0usize; 2]; n_classes];
    for &r in rows {
        k[class_label[r]][sensitive[r] as usize] += 1;
    }
    k
}

/// Fit the attacker on `rows`.
///
/// With one-hot inputs the per-sample loss depends only on (class, value)
/// counts, so full-batch gradient descent runs on the count table. Each
/// class column is preconditioned by its sample share so that rare classes
/// converge as fast as common ones.
pub fn fit_attacker(
    class_label: &[usize],
    sensitive: &[u8],
    rows: &[usize],
    n_classes: usize,
    cfg: &AttackerConfig,
) -> Result<AttackerModel> {
    if rows.is_empty() {
        return Err(Error::Empty("attacker training rows"));
    }
    let k = counts(class_label, sensitive, rows, n_classes);
    let n = rows.len() as f64;
    let share: Vec<f64> = k.iter().map(|c| (c[0] + c[1]) as f64 / n).collect();
    // w[c] holds both outputs' weights for class c.
    let mut w = vec![[0.0f64; 2]; n_classes];
    let mut b = [0.0f64; 2];
    for _ in 0..cfg.iterations {
        let mut gb = [0.0f64; 2];
        for c in 0..n_classes {
            let z0 = w[c][0] + b[0];
            let z1 = w[c][1] + b[1];
            let m = z0.max(z1);
            let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
            let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
            let mut g = [0.0; 2];
            for v in 0..2 {
                let resid = (share[c] * p[v] - k[c][v] as f64 / n).max(-1.0);
                gb[v] += resid;
                g[v] = resid + cfg.l2 * w[c][v];
            }
            let pre = cfg.learning_rate / (share[c] + cfg.l2);
            for v in 0..2 {
                w[c][v] -= pre * g[v];
            }
        }
        for v in 0..2 {
            b[v] -= cfg.learning_rate * gb[v];
        }
    }
    let mut weights = Vec::with_capacity(2 * n_classes);
    for v in 0..2 {
        weights.extend(w.iter().map(|wc| wc[v] as f32));
    }
    let head = LinearHead::new(
        2,
        n_classes,
        weights,
        vec![b[0] as f32, b[1] as f32],
        InputKind::ConceptActivation,
    )?;
    Ok(AttackerModel { head, config: *cfg })
}

fn check_labels(d: &DatasetLabels, class_label: &[usize]) -> Result<Vec<usize>> {
    if class_label.len() != d.len() {
        return Err(Error::LengthMismatch {
            what: "class labels",
            expected: d.len(),
            found: class_label.len(),
        });
    }
    if let Some(&index) = class_label.iter().find(|&&c| c >= d.n_classes()) {
        return Err(Error::ClassOutOfRange {
            index,
            n_classes: d.n_classes(),
        });
    }
    let eval = d.indices(Split::Test);
    if eval.is_empty() {
        return Err(Error::Empty("eval split"));
    }
    Ok(eval)
}

/// Majority-rule leakage: each class predicts its train-split majority
/// value; ties and classes unseen in train fall back to the global train
/// majority (ties there go to 0). Accuracy on the eval split.
pub fn closed_form_leakage(d: &DatasetLabels, class_label: &[usize]) -> Result<f64> {
    let eval = check_labels(d, class_label)?;
    let train = d.indices(Split::Train);
    let k = counts(class_label, d.sensitive(), &train, d.n_classes());
    let total: [usize; 2] = k.iter().fold([0, 0], |acc, c| [acc[0] + c[0], acc[1] + c[1]]);
    let global = u8::from(total[1] > total[0]);
    let rule: Vec<u8> = k
        .iter()
        .map(|c| match c[0].cmp(&c[1]) {
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Less => 1,
            std::cmp::Ordering::Equal => global,
        })
        .collect();
    let hits = eval
        .iter()
        .filter(|&&r| rule[class_label[r]] == d.sensitive()[r])
        .count();
    Ok(hits as f64 / eval.len() as f64)
}

/// Leakage of `class_label`: attacker trained on the train split,
/// accuracy on the eval split.
pub fn trained_leakage(d: &DatasetLabels, class_label: &[usize], cfg: &AttackerConfig) -> Result<f64> {
    let eval = check_labels(d, class_label)?;
    let train = d.indices(Split::Train);
    let attacker = fit_attacker(class_label, d.sensitive(), &train, d.n_classes(), cfg)?;
    Ok(attacker.accuracy(class_label, d.sensitive(), &eval))
}

pub fn dataset_leakage(d: &DatasetLabels, cfg: &AttackerConfig) -> Result<f64> {
    trained_leakage(d, d.class_label(), cfg)
}

/// Leakage with predicted labels in place of ground truth.
pub fn model_leakage(d: &DatasetLabels, preds: &[usize], cfg: &AttackerConfig) -> Result<f64> {
    trained_leakage(d, preds, cfg)
}

/// Random label replacement with common random numbers: one permutation
/// and one replacement class per row are drawn up front, and rate `p`
/// flips the first `round(p * n)` rows of the permutation. Achieved F1 is
/// therefore monotone in `p`.
#[derive(Debug, Clone)]
pub struct Perturber<'a> {
    labels: &'a [usize],
    order: Vec<usize>,
    replacement: Vec<usize>,
}

impl<'a> Perturber<'a> {
    pub fn new(labels: &'a [usize], n_classes: usize, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParameter("perturbation needs at least 2 classes".into()));
        }
        if let Some(&index) = labels.iter().find(|&&c| c >= n_classes) {
            return Err(Error::ClassOutOfRange { index, n_classes });
        }
        let mut rng = stream_rng(seed, 0);
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        let replacement = labels
            .iter()
            .map(|&l| {
                let r = rng.random_range(0..n_classes - 1);
                if r >= l {
                    r + 1
                } else {
                    r
                }
            })
            .collect();
        Ok(Self {
            labels,
            order,
            replacement,
        })
    }

    pub fn at_rate(&self, p: f64) -> Vec<usize> {
        let n = self.labels.len();
        let m = ((p.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
        let mut out = self.labels.to_vec();
        for &i in &self.order[..m] {
            out[i] = self.replacement[i];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub labels: Vec<usize>,
    pub rate: f64,
    pub achieved_f1: f64,
}

pub const F1_TOLERANCE: f64 = 0.005;
const BISECTION_STEPS: usize = 30;

/// Perturb `labels` until their F1 against the originals reaches
/// `target_f1`, bisecting on the perturbation rate. When the label count
/// is too small to land within the tolerance the closest rate is returned.
pub fn perturb_to_f1(
    labels: &[usize],
    n_classes: usize,
    target_f1: f64,
    seed: u64,
    average: F1Average,
) -> Result<Perturbation> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let pert = Perturber::new(labels, n_classes, seed)?;
    let f1_at = |p: f64| -> Result<(Vec<usize>, f64)> {
        let l = pert.at_rate(p);
        let f = f1_score(&l, labels, average)?;
        Ok((l, f))
    };
    if !target_f1.is_finite() || target_f1 > 1.0 + F1_TOLERANCE {
        return Err(Error::BracketFailed {
            target: target_f1,
            floor: f64::NAN,
        });
    }
    if target_f1 >= 1.0 - F1_TOLERANCE {
        return Ok(Perturbation {
            labels: labels.to_vec(),
            rate: 0.0,
            achieved_f1: 1.0,
        });
    }
    let (hi_labels, floor) = f1_at(1.0)?;
    if target_f1 < floor - F1_TOLERANCE {
        return Err(Error::BracketFailed {
            target: target_f1,
            floor,
        });
    }
    let mut best = Perturbation {
        labels: hi_labels,
        rate: 1.0,
        achieved_f1: floor,
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        if (best.achieved_f1 - target_f1).abs() <= F1_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (l, f) = f1_at(mid)?;
        if (f - target_f1).abs() < (best.achieved_f1 - target_f1).abs() {
            best = Perturbation {
                labels: l,
                rate: mid,
                achieved_f1: f,
            };
        }
        if f > target_f1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessConfig {
    pub n_runs: usize,
    /// Explicit seeds; when empty, `base_seed + i` for each run.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub attacker: AttackerConfig,
    pub f1_average: F1Average,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self {
            n_runs: 5,
            seeds: Vec::new(),
            base_seed: 0,
            attacker: AttackerConfig::default(),
            f1_average: F1Average::Micro,
        }
    }
}

impl FairnessConfig {
    pub fn run_seeds(&self) -> Result<Vec<u64>> {
        if !self.seeds.is_empty() {
            return Ok(self.seeds.clone());
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("n_runs must be >= 1".into()));
        }
        Ok((0..self.n_runs as u64).map(|i| self.base_seed + i).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub adjusted_dataset_leakage: f64,
    pub bias_amplification: f64,
    pub achieved_f1_train: f64,
    pub achieved_f1_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Eval-split accuracy of the predictions.
    pub accuracy: f64,
    pub f1: f64,
    pub dataset_leakage: f64,
    pub model_leakage: f64,
    /// Mean over runs.
    pub adjusted_dataset_leakage: f64,
    pub bias_amplification_mean: f64,
    pub bias_amplification_std: f64,
    pub n_runs: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Model leakage minus performance-adjusted dataset leakage, averaged
/// over runs.
///
/// Each split of the ground truth is perturbed separately to the F1 the
/// predictions reach on that split, so the reference model matches the
/// predictions on both the rows the attacker trains on and the rows it is
/// scored on.
pub fn bias_amplification(d: &DatasetLabels, preds: &[usize], cfg: &FairnessConfig) -> Result<FairnessReport> {
    let eval = check_labels(d, preds)?;
    let train = d.indices(Split::Train);
    let truth = d.class_label();
    let pick = |v: &[usize], rows: &[usize]| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
    let eval_preds = pick(preds, &eval);
    let eval_truth = pick(truth, &eval);
    let accuracy = f1_score(&eval_preds, &eval_truth, F1Average::Micro)?;
    let f1 = f1_score(&eval_preds, &eval_truth, cfg.f1_average)?;
    let train_f1 = f1_score(&pick(preds, &train), &pick(truth, &train), cfg.f1_average)?;
    let dataset = trained_leakage(d, truth, &cfg.attacker)?;
    let model = trained_leakage(d, preds, &cfg.attacker)?;
    let seeds = cfg.run_seeds()?;

    let runs = par::map_slice(&seeds, |&seed| -> Result<RunRecord> {
        let mut perturbed = truth.to_vec();
        let mut achieved = [0.0; 2];
        for (k, (rows, target)) in [(&train, train_f1), (&eval, f1)].into_iter().enumerate() {
            let sub = pick(truth, rows);
            let p = perturb_to_f1(&sub, d.n_classes(), target, derive_seed(seed, k as u64), cfg.f1_average)?;
            for (&r, &l) in rows.iter().zip(&p.labels) {
                perturbed[r] = l;
            }
            achieved[k] = p.achieved_f1;
        }
        let adjusted = trained_leakage(d, &perturbed, &cfg.attacker)?;
        Ok(RunRecord {
            seed,
            adjusted_dataset_leakage: adjusted,
            bias_amplification: model - adjusted,
            achieved_f1_train: achieved[0],
            achieved_f1_test: achieved[1],
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let amps: Vec<f64> = runs.iter().map(|r| r.bias_amplification).collect();
    let adj: Vec<f64> = runs.iter().map(|r| r.adjusted_dataset_leakage).collect();
    let (amp_mean, amp_std) = mean_std(&amps);
    Ok(FairnessReport {
        accuracy,
        f1,
        dataset_leakage: dataset,
        model_leakage: model,
        adjusted_dataset_leakage: mean_std(&adj).0,
        bias_amplification_mean: amp_mean,
        bias_amplification_std: amp_std,
        n_runs: seeds.len(),
        seeds,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_from(rows: &[(usize, u8, Split)], n_classes: usize) -> DatasetLabels {
        DatasetLabels::new(
            (0..rows.len()).map(|i| i.to_string()).collect(),
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            (0..n_classes).map(|c| format!("c{c}")).collect(),
            "gender",
        )
        .unwrap()
    }

    /// Class c gets `n_c` train and `n_c` test rows with male share `r_c`.
    fn by_ratio(ratios: &[f64], per_class: usize) -> DatasetLabels {
        let mut rows = Vec::new();
        for split in [Split::Train, Split::Test] {
            for (c, &r) in ratios.iter().enumerate() {
                let males = (r * per_class as f64).round() as usize;
                for i in 0..per_class {
                    rows.push((c, u8::from(i >= males), split));
                }
            }
        }
        labels_from(&rows, ratios.len())
    }

    #[test]
    fn single_gender_classes_leak_fully() {
        let d = by_ratio(&[1.0, 0.0, 1.0], 20);
        assert_eq!(closed_form_leakage(&d, d.class_label()).unwrap(), 1.0);
        assert_eq!(dataset_leakage(&d, &AttackerConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn two_class_hand_expectation() {
        // Train ratios 0.8 / 0.3 male, equal class weights:
        // 0.5 * 0.8 + 0.5 * 0.7 = 0.75.
        let d = by_ratio(&[0.8, 0.3], 50);
        let closed = closed_form_leakage(&d, d.class_label()).unwrap();
        assert!((closed - 0.75).abs() < 1e-12);
        let trained = dataset_leakage(&d, &AttackerConfig::default()).unwrap();
        assert!((trained - closed).abs() <= 0.02);
    }

    #[test]
    fn balanced_classes_leak_half() {
        let d = by_ratio(&[0.5, 0.5, 0.5], 40);
        assert_eq!(closed_form_leakage(&d, d.class_label()).unwrap(), 0.5);
        let trained = dataset_leakage(&d, &AttackerConfig::default()).unwrap();
        assert!((trained - 0.5).abs() <= 0.02);
    }

    #[test]
    fn unseen_class_uses_global_majority() {
        let rows = vec![
            (0, 0, Split::Train),
            (0, 0, Split::Train),
            (0, 1, Split::Train),
            (1, 1, Split::Train),
            (2, 0, Split::Test),
            (2, 1, Split::Test),
            (2, 0, Split::Test),
        ];
        let d = labels_from(&rows, 3);
        let closed = closed_form_leakage(&d, d.class_label()).unwrap();
        // Train is 2 male, 2 female: global tie goes to male.
        assert!((closed - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn model_leakage_of_truth_is_dataset_leakage() {
        let d = by_ratio(&[0.8, 0.3, 0.6], 30);
        let cfg = AttackerConfig::default();
        assert_eq!(
            model_leakage(&d, d.class_label(), &cfg).unwrap(),
            dataset_leakage(&d, &cfg).unwrap()
        );
    }

    #[test]
    fn constant_predictions_give_global_ratio() {
        let d = by_ratio(&[0.9, 0.6, 0.8], 50);
        let preds = vec![1; d.len()];
        let leak = model_leakage(&d, &preds, &AttackerConfig::default()).unwrap();
        let male = d.indices(Split::Test).iter().filter(|&&r| d.sensitive()[r] == 0).count() as f64
            / d.indices(Split::Test).len() as f64;
        assert!((leak - male.max(1.0 - male)).abs() < 1e-12);
    }

    #[test]
    fn leakage_needs_eval_rows() {
        let d = labels_from(&[(0, 0, Split::Train), (0, 1, Split::Train)], 1);
        assert!(matches!(closed_form_leakage(&d, d.class_label()), Err(Error::Empty(_))));
    }

    #[test]
    fn perturb_hand_cases() {
        let labels = vec![0, 1, 2, 3];
        let p = perturb_to_f1(&labels, 4, 1.0, 1, F1Average::Micro).unwrap();
        assert_eq!(p.labels, labels);
        assert_eq!(p.rate, 0.0);
        let p = perturb_to_f1(&labels, 4, 0.75, 1, F1Average::Micro).unwrap();
        assert_eq!(p.labels.iter().zip(&labels).filter(|(a, b)| a != b).count(), 1);
        assert_eq!(p.achieved_f1, 0.75);
        assert!(perturb_to_f1(&labels, 4, 1.2, 1, F1Average::Micro).is_err());
        assert!(perturb_to_f1(&labels, 1, 0.5, 1, F1Average::Micro).is_err());
    }

    #[test]
    fn replacement_is_always_a_different_class() {
        let labels: Vec<usize> = (0..500).map(|i| i % 7).collect();
        let p = Perturber::new(&labels, 7, 3).unwrap();
        let all = p.at_rate(1.0);
        assert!(all.iter().zip(&labels).all(|(a, b)| a != b));
    }

    proptest! {
        #[test]
        fn achieved_f1_monotone_in_rate(n in 10usize..200, c in 2usize..6, seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let labels: Vec<usize> = (0..n).map(|i| (i * 31 + 7) % c).collect();
            let p = Perturber::new(&labels, c, seed).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            let f_lo = f1_score(&p.at_rate(lo), &labels, F1Average::Micro).unwrap();
            let f_hi = f1_score(&p.at_rate(hi), &labels, F1Average::Micro).unwrap();
            prop_assert!(f_hi <= f_lo);
            let m_lo = f1_score(&p.at_rate(lo), &labels, F1Average::Macro).unwrap();
            prop_assert!((0.0..=1.0).contains(&m_lo));
        }
    }

    #[test]
    fn perfect_predictions_have_zero_amplification() {
        let d = by_ratio(&[0.8, 0.3, 0.6, 0.5], 40);
        let r = bias_amplification(&d, d.class_label(), &FairnessConfig::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.model_leakage, r.dataset_leakage);
        assert_eq!(r.bias_amplification_mean, 0.0);
        assert_eq!(r.n_runs, 5);
    }

    #[test]
    fn report_is_reproducible() {
        let d = by_ratio(&[0.8, 0.3, 0.6, 0.5], 40);
        let preds: Vec<usize> = d.class_label().iter().enumerate().map(|(i, &c)| if i % 3 == 0 { (c + 1) % 4 } else { c }).collect();
        let cfg = FairnessConfig { seeds: vec![4, 9], ..Default::default() };
        let a = bias_amplification(&d, &preds, &cfg).unwrap();
        let b = bias_amplification(&d, &preds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seeds, vec![4, 9]);
        assert!(a.runs.iter().all(|r| (0.0..=1.0).contains(&r.adjusted_dataset_leakage)));
        assert!((-1.0..=1.0).contains(&a.bias_amplification_mean));
    }
}
