//! Concept contributions, biased-concept ranking and concept removal.
//!
//! A contribution is `W[class, j] * a[j]`; summed over concepts in index
//! order plus the bias it reproduces the head's logit exactly.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bottleneck::zero_concepts;
use crate::data::{ActivationMatrix, DatasetLabels, InputKind, LinearHead, Split};
use crate::error::{Error, Result};
use crate::fairness::{bias_amplification, FairnessConfig, FairnessReport};
use crate::heads::{gather_rows, predict_labels, train_head, Samples, TrainConfig, TrainTrace};
use crate::io::read_json;
use crate::linalg;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionVector {
    pub class: usize,
    pub contributions: Vec<f64>,
    pub bias: f64,
}

impl ContributionVector {
    pub fn logit(&self) -> f64 {
        self.contributions.iter().sum::<f64>() + self.bias
    }
}

fn check_row(head: &LinearHead, row: &[f32]) -> Result<()> {
    if row.len() != head.n_inputs() {
        return Err(Error::Shape(format!(
            "head expects {} inputs, got {}",
            head.n_inputs(),
            row.len()
        )));
    }
    Ok(())
}

fn check_class(head: &LinearHead, class: usize) -> Result<()> {
    if class >= head.n_outputs() {
        return Err(Error::ClassOutOfRange {
            index: class,
            n_classes: head.n_outputs(),
        });
    }
    Ok(())
}

pub fn concept_contributions(head: &LinearHead, row: &[f32], class: usize) -> Result<ContributionVector> {
    check_row(head, row)?;
    check_class(head, class)?;
    let contributions = head
        .weight_row(class)
        .iter()
        .zip(row)
        .map(|(&w, &a)| w as f64 * a as f64)
        .collect();
    Ok(ContributionVector {
        class,
        contributions,
        bias: head.bias()[class] as f64,
    })
}

/// Indices of the `n` largest values, ties to the lower index.
fn top_n(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Labels predicted from each class's `n` largest contributions plus its
/// bias. The kept contributions are summed in index order, so `n` equal to
/// the concept count reproduces `predict` exactly.
pub fn topn_contribution_predict(head: &LinearHead, acts: &ActivationMatrix, n: usize) -> Result<Vec<usize>> {
    let m = acts.n_concepts();
    if n == 0 || n > m {
        return Err(Error::InvalidParameter(format!("n must be in 1..={m}, got {n}")));
    }
    if m != head.n_inputs() {
        return Err(Error::Shape(format!("head expects {} inputs, got {m}", head.n_inputs())));
    }
    Ok(par::map_range(acts.n_images(), |i| {
        let row = acts.row(i);
        let z: Vec<f64> = (0..head.n_outputs())
            .map(|c| {
                let contrib: Vec<f64> = head
                    .weight_row(c)
                    .iter()
                    .zip(row)
                    .map(|(&w, &a)| w as f64 * a as f64)
                    .collect();
                let mut keep = top_n(&contrib, n);
                keep.sort_unstable();
                keep.iter().map(|&j| contrib[j]).sum::<f64>() + head.bias()[c] as f64
            })
            .collect();
        linalg::argmax(&z)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub index: usize,
    pub name: String,
    pub weight: f32,
}

/// Concepts ranked per gender output of a 2-output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRanking {
    pub male: Vec<RankedConcept>,
    pub female: Vec<RankedConcept>,
}

/// Sort each output's weights descending (ties to the lower index).
/// Output 0 is male, 1 female.
pub fn rank_biased_concepts(gender_head: &LinearHead, names: &[String]) -> Result<BiasRanking> {
    if gender_head.n_outputs() != 2 {
        return Err(Error::Shape(format!(
            "gender head must have 2 outputs, got {}",
            gender_head.n_outputs()
        )));
    }
    if names.len() != gender_head.n_inputs() {
        return Err(Error::LengthMismatch {
            what: "concept names",
            expected: gender_head.n_inputs(),
            found: names.len(),
        });
    }
    let rank = |o: usize| {
        let w = gender_head.weight_row(o);
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        idx.into_iter()
            .map(|j| RankedConcept {
                index: j,
                name: names[j].clone(),
                weight: w[j],
            })
            .collect()
    };
    Ok(BiasRanking {
        male: rank(0),
        female: rank(1),
    })
}

/// Which ranked list(s) removal candidates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RemovalSource {
    /// Alternate male, female, male, ... skipping repeats.
    #[default]
    Interleave,
    Male,
    Female,
}

/// The first `n` distinct concept indices drawn from the ranking.
pub fn select_removal(ranking: &BiasRanking, n: usize, source: RemovalSource) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let push = |j: usize, out: &mut Vec<usize>| {
        if out.len() < n && !out.contains(&j) {
            out.push(j);
        }
    };
    match source {
        RemovalSource::Male => ranking.male.iter().for_each(|r| push(r.index, &mut out)),
        RemovalSource::Female => ranking.female.iter().for_each(|r| push(r.index, &mut out)),
        RemovalSource::Interleave => {
            for (m, f) in ranking.male.iter().zip(&ranking.female) {
                push(m.index, &mut out);
                push(f.index, &mut out);
            }
        }
    }
    out
}

/// Train the 2-output gender head on the train split with the concept
/// head recipe.
pub fn train_gender_head(
    acts: &ActivationMatrix,
    d: &DatasetLabels,
    cfg: &TrainConfig,
) -> Result<(LinearHead, TrainTrace)> {
    check_alignment(acts, d)?;
    let rows = d.indices(Split::Train);
    let x = gather_rows(acts.view(), &rows);
    let y: Vec<usize> = rows.iter().map(|&r| d.sensitive()[r] as usize).collect();
    let view = crate::data::MatrixView::new(&x, rows.len(), acts.n_concepts())?;
    train_head(Samples::new(view, &y, 2)?, 2, None, cfg, InputKind::ConceptActivation)
}

fn check_alignment(acts: &ActivationMatrix, d: &DatasetLabels) -> Result<()> {
    if acts.row_ids() != d.row_ids() {
        return Err(Error::Shape("activation rows do not match dataset rows".into()));
    }
    Ok(())
}

/// Fairness before and after zeroing `indices` at inference, with the same
/// head. No retraining.
pub fn evaluate_removal(
    head: &LinearHead,
    acts: &ActivationMatrix,
    d: &DatasetLabels,
    indices: &[usize],
    cfg: &FairnessConfig,
) -> Result<(FairnessReport, FairnessReport)> {
    check_alignment(acts, d)?;
    let before = bias_amplification(d, &predict_labels(head, acts.view())?, cfg)?;
    let zeroed = zero_concepts(acts, indices)?;
    let after = bias_amplification(d, &predict_labels(head, zeroed.view())?, cfg)?;
    Ok((before, after))
}

/// One row of the ratings file: a concept and a bias score in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRating {
    pub concept: String,
    pub bias_score: f64,
}

pub fn read_ratings(path: &Path) -> Result<Vec<BiasRating>> {
    read_json(path)
}

/// Check scores and concept names; returns the concept index of each row.
pub fn validate_ratings(ratings: &[BiasRating], names: &[String]) -> Result<Vec<usize>> {
    ratings
        .iter()
        .map(|r| {
            if !(0.0..=1.0).contains(&r.bias_score) {
                return Err(Error::InvalidParameter(format!(
                    "bias_score {} for {:?} outside [0, 1]",
                    r.bias_score, r.concept
                )));
            }
            names
                .iter()
                .position(|n| *n == r.concept)
                .ok_or_else(|| Error::UnknownConcept(r.concept.clone()))
        })
        .collect()
}

/// The `n` highest-rated concepts (ties to the lower concept index).
pub fn select_by_rating(ratings: &[BiasRating], names: &[String], n: usize) -> Result<Vec<usize>> {
    let idx = validate_ratings(ratings, names)?;
    let mut pairs: Vec<(usize, f64)> = idx.into_iter().zip(ratings.iter().map(|r| r.bias_score)).collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    for (j, _) in pairs {
        if out.len() == n {
            break;
        }
        if !out.contains(&j) {
            out.push(j);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptShift {
    pub index: usize,
    pub name: String,
    pub before: f64,
    pub after: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub class: usize,
    pub n_before: usize,
    pub n_after: usize,
    /// Set when either head has no member images for the class; `shifts`
    /// is then empty.
    pub flagged: bool,
    pub shifts: Vec<ConceptShift>,
}

/// Per-concept change in the class-averaged contribution between two
/// heads. Members are the images each head predicts as `class`, or the
/// ground-truth members when `truth` is given. Sorted by |shift|
/// descending.
pub fn class_avg_contribution_shift(
    before: &LinearHead,
    after: &LinearHead,
    acts: &ActivationMatrix,
    class: usize,
    truth: Option<&[usize]>,
) -> Result<ShiftReport> {
    let (pb, pa) = member_labels(before, after, acts, truth)?;
    shift_for_class(before, after, acts, class, &pb, &pa)
}

fn member_labels(
    before: &LinearHead,
    after: &LinearHead,
    acts: &ActivationMatrix,
    truth: Option<&[usize]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if before.n_outputs() != after.n_outputs() || before.n_inputs() != after.n_inputs() {
        return Err(Error::Shape("heads differ in shape".into()));
    }
    if acts.n_concepts() != before.n_inputs() {
        return Err(Error::Shape(format!(
            "heads expect {} inputs, got {}",
            before.n_inputs(),
            acts.n_concepts()
        )));
    }
    match truth {
        Some(t) => {
            if t.len() != acts.n_images() {
                return Err(Error::LengthMismatch {
                    what: "class labels",
                    expected: acts.n_images(),
                    found: t.len(),
                });
            }
            Ok((t.to_vec(), t.to_vec()))
        }
        None => Ok((predict_labels(before, acts.view())?, predict_labels(after, acts.view())?)),
    }
}

fn shift_for_class(
    before: &LinearHead,
    after: &LinearHead,
    acts: &ActivationMatrix,
    class: usize,
    members_before: &[usize],
    members_after: &[usize],
) -> Result<ShiftReport> {
    check_class(before, class)?;
    let mean_acts = |labels: &[usize]| -> (usize, Vec<f64>) {
        let mut sum = vec![0.0f64; acts.n_concepts()];
        let mut n = 0;
        for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l == class) {
            n += 1;
            for (s, &a) in sum.iter_mut().zip(acts.row(i)) {
                *s += a as f64;
            }
        }
        sum.iter_mut().for_each(|s| *s /= n.max(1) as f64);
        (n, sum)
    };
    let (n_before, mb) = mean_acts(members_before);
    let (n_after, ma) = mean_acts(members_after);
    let flagged = n_before == 0 || n_after == 0;
    let mut shifts = Vec::new();
    if !flagged {
        let wb = before.weight_row(class);
        let wa = after.weight_row(class);
        shifts = acts
            .concept_names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let b = wb[j] as f64 * mb[j];
                let a = wa[j] as f64 * ma[j];
                ConceptShift {
                    index: j,
                    name: name.clone(),
                    before: b,
                    after: a,
                    shift: a - b,
                }
            })
            .collect();
        shifts.sort_by(|x, y| {
            y.shift
                .abs()
                .partial_cmp(&x.shift.abs())
                .unwrap_or(Ordering::Equal)
                .then(x.index.cmp(&y.index))
        });
    }
    Ok(ShiftReport {
        class,
        n_before,
        n_after,
        flagged,
        shifts,
    })
}

/// Shift reports for every class.
pub fn all_class_shifts(
    before: &LinearHead,
    after: &LinearHead,
    acts: &ActivationMatrix,
    truth: Option<&[usize]>,
) -> Result<Vec<ShiftReport>> {
    let (pb, pa) = member_labels(before, after, acts, truth)?;
    let classes: Vec<usize> = (0..before.n_outputs()).collect();
    par::map_slice(&classes, |&c| shift_for_class(before, after, acts, c, &pb, &pa))
        .into_iter()
        .collect()
}

pub const DEFAULT_REPORT_TOP: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionEntry {
    pub index: usize,
    pub name: String,
    pub activation: f32,
    pub weight: f32,
    pub contribution: f64,
}

/// The largest contributions of one image to one class, with the rest
/// folded into a single remaining-mass figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub row_id: String,
    pub class: usize,
    pub logit: f64,
    pub bias: f64,
    pub top: Vec<ContributionEntry>,
    pub remaining_mass: f64,
    pub remaining_count: usize,
}

pub fn contribution_report(
    head: &LinearHead,
    acts: &ActivationMatrix,
    image: usize,
    class: usize,
    top: usize,
) -> Result<ContributionReport> {
    if image >= acts.n_images() {
        return Err(Error::IndexOutOfRange {
            index: image,
            bound: acts.n_images(),
        });
    }
    let row = acts.row(image);
    let cv = concept_contributions(head, row, class)?;
    let order = top_n(&cv.contributions, top.min(row.len()));
    let w = head.weight_row(class);
    let entries: Vec<ContributionEntry> = order
        .iter()
        .map(|&j| ContributionEntry {
            index: j,
            name: acts.concept_names()[j].clone(),
            activation: row[j],
            weight: w[j],
            contribution: cv.contributions[j],
        })
        .collect();
    let mut rest: Vec<bool> = vec![true; row.len()];
    order.iter().for_each(|&j| rest[j] = false);
    let remaining_mass = cv
        .contributions
        .iter()
        .zip(&rest)
        .filter(|(_, &r)| r)
        .map(|(c, _)| c)
        .sum();
    Ok(ContributionReport {
        row_id: acts.row_ids()[image].clone(),
        class,
        logit: cv.logit(),
        bias: cv.bias,
        top: entries,
        remaining_mass,
        remaining_count: row.len() - order.len(),
    })
}
