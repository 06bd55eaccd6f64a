//! The concept bottleneck layer and the transforms applied to it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{ActivationMatrix, EmbeddingMatrix, Transform};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;


/// Cosine similarity of every image with every concept.
///
/// Concept names are the row ids of `concepts`.
pub fn compute_activations(images: &EmbeddingMatrix, concepts: &EmbeddingMatrix) -> Result<ActivationMatrix> {
    if images.n_cols() != concepts.n_cols() {
        return Err(Error::Shape(format!(
            "image dim {} != concept dim {}",
            images.n_cols(),
            concepts.n_cols()
        )));
    }
    let img_norms = linalg::row_norms(images.values(), images.n_cols())?;
    let con_norms = linalg::row_norms(concepts.values(), concepts.n_cols())?;
    let m = concepts.n_rows();
    let mut values = vec![0.0f32; images.n_rows() * m];
    par::for_each_row_mut(&mut values, m, |i, out| {
        let x = images.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            let c = linalg::dot(x, concepts.row(j)) / (img_norms[i] * con_norms[j]);
            *o = c.clamp(-1.0, 1.0) as f32;
        }
    });
    ActivationMatrix::new(
        images.n_rows(),
        m,
        values,
        images.row_ids().to_vec(),
        concepts.row_ids().to_vec(),
    )
}

/// Positions of the `k` largest values; equal values go to the lower index.
pub fn topk_indices(row: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let cmp = |a: &usize, b: &usize| -> Ordering { row[*b].total_cmp(&row[*a]).then(a.cmp(b)) };
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Keep each row's `k` largest activations and zero the rest.
///
/// Idempotent on non-negative activations (the usual case for CLIP
/// similarities); negative survivors can lose to the zeros on a second pass.
pub fn topk_filter(acts: &ActivationMatrix, k: usize) -> Result<ActivationMatrix> {
    let m = acts.n_concepts();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!("k = {k} outside [1, {m}]")));
    }
    let mut values = acts.values().to_vec();
    par::for_each_row_mut(&mut values, m, |_, row| {
        if k == row.len() {
            return;
        }
        let keep = topk_indices(row, k);
        let mut next = keep.iter().peekable();
        for (j, v) in row.iter_mut().enumerate() {
            if next.peek() == Some(&&j) {
                next.next();
            } else {
                *v = 0.0;
            }
        }
    });
    Ok(acts.transformed(values, Transform::Topk { k }))
}

/// Per-concept standardisation frozen from the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Bucket width in standard deviations.
    pub step: f64,
}

/// Fit per-concept mean and (population) std on the given rows.
pub fn fit_quantizer(acts: &ActivationMatrix, rows: &[usize], step: f64) -> Result<QuantizeParams> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("quantization step must be > 0, got {step}")));
    }
    if rows.is_empty() {
        return Err(Error::Empty("quantizer fit rows"));
    }
    if let Some(&index) = rows.iter().find(|&&r| r >= acts.n_images()) {
        return Err(Error::IndexOutOfRange {
            index,
            bound: acts.n_images(),
        });
    }
    let m = acts.n_concepts();
    let n = rows.len() as f64;
    let mut mean = vec![0.0f64; m];
    for &r in rows {
        for (mu, &v) in mean.iter_mut().zip(acts.row(r)) {
            *mu += v as f64;
        }
    }
    mean.iter_mut().for_each(|mu| *mu /= n);
    let mut var = vec![0.0f64; m];
    for &r in rows {
        for ((s, &v), mu) in var.iter_mut().zip(acts.row(r)).zip(&mean) {
            let d = v as f64 - mu;
            *s += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    if let Some(column) = std.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::DegenerateColumn { column });
    }
    Ok(QuantizeParams { mean, std, step })
}

/// Bucket value for one activation: the largest bucket whose f32 value
/// does not exceed `a`. Deciding in f32 makes re-quantizing a bucket value
/// a no-op.
pub fn quantize_value(a: f32, mean: f64, std: f64, step: f64) -> f32 {
    let width = step * std;
    let at = |b: f64| (mean + b * width) as f32;
    let mut b = ((a as f64 - mean) / width).floor();
    for _ in 0..64 {
        if at(b + 1.0) <= a {
            b += 1.0;
        } else if at(b) > a {
            b -= 1.0;
        } else {
            break;
        }
    }
    at(b)
}

/// Snap every activation down to its bucket `mean + step*floor(z/step)*std`.
/// Buckets extend symmetrically below the mean. Exact zeros (filtered or
/// zeroed entries) stay zero.
pub fn quantize(acts: &ActivationMatrix, qp: &QuantizeParams) -> Result<ActivationMatrix> {
    let m = acts.n_concepts();
    if qp.mean.len() != m || qp.std.len() != m {
        return Err(Error::Shape(format!(
            "quantizer fitted on {} concepts, matrix has {m}",
            qp.mean.len()
        )));
    }
    let mut values = acts.values().to_vec();
    par::for_each_row_mut(&mut values, m, |_, row| {
        for (j, v) in row.iter_mut().enumerate() {
            if *v != 0.0 {
                *v = quantize_value(*v, qp.mean[j], qp.std[j], qp.step);
            }
        }
    });
    Ok(acts.transformed(values, Transform::Quantize { step: qp.step }))
}

/// Set the listed concept columns to exactly zero.
pub fn zero_concepts(acts: &ActivationMatrix, indices: &[usize]) -> Result<ActivationMatrix> {
    let m = acts.n_concepts();
    if let Some(&index) = indices.iter().find(|&&j| j >= m) {
        return Err(Error::IndexOutOfRange { index, bound: m });
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut values = acts.values().to_vec();
    par::for_each_row_mut(&mut values, m, |_, row| {
        for &j in &sorted {
            row[j] = 0.0;
        }
    });
    Ok(acts.transformed(values, Transform::Zeroed { indices: sorted }))
}

/// Settings for the leakage-reducing transforms, applied as
/// quantize-then-top-k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BottleneckTransform {
    pub topk: Option<usize>,
    /// Quantization step in standard deviations.
    pub quantize_step: Option<f64>,
    /// Apply top-k before quantization instead of after.
    #[serde(default)]
    pub topk_first: bool,
}

impl BottleneckTransform {
    /// Fit on `train_rows` and apply to the whole matrix.
    pub fn apply(&self, acts: &ActivationMatrix, train_rows: &[usize]) -> Result<ActivationMatrix> {
        let mut out = acts.clone();
        let q = |m: &ActivationMatrix| -> Result<ActivationMatrix> {
            match self.quantize_step {
                Some(step) => quantize(m, &fit_quantizer(m, train_rows, step)?),
                None => Ok(m.clone()),
            }
        };
        let t = |m: &ActivationMatrix| -> Result<ActivationMatrix> {
            match self.topk {
                Some(k) => topk_filter(m, k),
                None => Ok(m.clone()),
            }
        };
        if self.topk_first {
            out = q(&t(&out)?)?;
        } else {
            out = t(&q(&out)?)?;
        }
        Ok(out)
    }
}
