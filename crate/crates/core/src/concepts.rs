//! Concept list filtering: length, similarity to class names, similarity
//! to earlier concepts, and low activation on the image set, applied in
//! that order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ActivationMatrix, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;

/// Cosines within this distance of a threshold count as equal to it, so
/// values sitting on the boundary survive float rounding.
pub const SIM_EPS: f64 = 1e-6;

/// Number of highest image activations averaged by the activation filter.
pub const TOP_ACTIVATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Not yet passed through any filter.
    Raw,
    /// Survived at least one filter.
    Kept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Length,
    ClassSimilarity,
    ConceptSimilarity,
    LowActivation,
}

/// Concept names with one text embedding each (row id = name).
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    embeddings: EmbeddingMatrix,
    provenance: Vec<Provenance>,
}

impl ConceptSet {
    /// Row ids of `embeddings` are the concept names.
    pub fn new(embeddings: EmbeddingMatrix) -> Self {
        let n = embeddings.n_rows();
        Self {
            embeddings,
            provenance: vec![Provenance::Raw; n],
        }
    }

    pub fn len(&self) -> usize {
        self.embeddings.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        self.embeddings.row_ids()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Keep the listed positions; returns the kept set and removed names.
    fn retain(&self, keep: &[bool]) -> Result<(ConceptSet, Vec<String>)> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let removed = (0..self.len())
            .filter(|&i| !keep[i])
            .map(|i| self.names()[i].clone())
            .collect();
        let set = ConceptSet {
            embeddings: self.embeddings.select_rows(&rows)?,
            provenance: vec![Provenance::Kept; rows.len()],
        };
        Ok((set, removed))
    }
}

/// Read a newline-delimited concept list. Blank lines are skipped, exact
/// duplicates keep their first occurrence.
pub fn read_concept_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_concept_list(&text))
}

pub fn parse_concept_list(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .filter(|l| seen.insert(l.to_string()))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_len: usize,
    pub class_sim_threshold: f64,
    pub concept_sim_threshold: f64,
    pub interpretability_cutoff: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_len: 30,
            class_sim_threshold: 0.85,
            concept_sim_threshold: 0.9,
            interpretability_cutoff: 0.25,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("class_sim_threshold", self.class_sim_threshold),
            ("concept_sim_threshold", self.concept_sim_threshold),
            ("interpretability_cutoff", self.interpretability_cutoff),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in (0, 1], got {t}")));
            }
        }
        if self.max_len == 0 {
            return Err(Error::InvalidParameter("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Unit-normalised copies of each row.
fn normalized_rows(m: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    let norms = linalg::row_norms(m.values(), m.n_cols())?;
    Ok((0..m.n_rows())
        .map(|i| m.row(i).iter().map(|&v| v as f64 / norms[i]).collect())
        .collect())
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Remove concepts longer than `max_len` characters.
pub fn filter_length(cs: &ConceptSet, max_len: usize) -> Result<(ConceptSet, Vec<String>)> {
    let keep: Vec<bool> = cs.names().iter().map(|n| n.chars().count() <= max_len).collect();
    cs.retain(&keep)
}

/// Remove concepts whose cosine to any class embedding exceeds `threshold`.
pub fn filter_similar_to_classes(
    cs: &ConceptSet,
    class_embeddings: &EmbeddingMatrix,
    threshold: f64,
) -> Result<(ConceptSet, Vec<String>)> {
    if cs.is_empty() {
        return cs.retain(&[]);
    }
    if class_embeddings.n_cols() != cs.embeddings.n_cols() {
        return Err(Error::Shape(format!(
            "class embeddings have dim {}, concepts {}",
            class_embeddings.n_cols(),
            cs.embeddings.n_cols()
        )));
    }
    let concepts = normalized_rows(&cs.embeddings)?;
    let classes = normalized_rows(class_embeddings)?;
    let keep = par::map_slice(&concepts, |c| {
        classes.iter().all(|k| cos(c, k) <= threshold + SIM_EPS)
    });
    cs.retain(&keep)
}

/// Scan in list order; drop a concept whose cosine with any earlier kept
/// concept exceeds `threshold`.
pub fn filter_similar_concepts(cs: &ConceptSet, threshold: f64) -> Result<(ConceptSet, Vec<String>)> {
    let rows = normalized_rows(&cs.embeddings)?;
    // Candidate earlier neighbours computed in parallel; the scan itself
    // only needs to know which of them survived.
    let earlier: Vec<Vec<usize>> = par::map_range(rows.len(), |i| {
        (0..i)
            .filter(|&j| cos(&rows[i], &rows[j]) > threshold + SIM_EPS)
            .collect()
    });
    let mut keep = vec![false; rows.len()];
    for i in 0..rows.len() {
        keep[i] = !earlier[i].iter().any(|&j| keep[j]);
    }
    cs.retain(&keep)
}

/// Mean of the `TOP_ACTIVATIONS` largest values in each column.
pub fn top_activation_means(acts: &ActivationMatrix) -> Result<Vec<f64>> {
    if acts.n_images() < TOP_ACTIVATIONS {
        return Err(Error::TooFewImages {
            needed: TOP_ACTIVATIONS,
            found: acts.n_images(),
        });
    }
    Ok(par::map_range(acts.n_concepts(), |j| {
        let mut col: Vec<f32> = acts.rows().map(|r| r[j]).collect();
        col.select_nth_unstable_by(TOP_ACTIVATIONS - 1, |a, b| b.total_cmp(a));
        col[..TOP_ACTIVATIONS].iter().map(|&v| v as f64).sum::<f64>() / TOP_ACTIVATIONS as f64
    }))
}

/// Remove concepts whose mean top-5 image activation is below `cutoff`.
/// Columns of `acts` are matched to concepts by name.
pub fn filter_low_activation(
    cs: &ConceptSet,
    acts: &ActivationMatrix,
    cutoff: f64,
) -> Result<(ConceptSet, Vec<String>)> {
    let means = top_activation_means(acts)?;
    let col_of: std::collections::HashMap<&str, usize> = acts
        .concept_names()
        .iter()
        .enumerate()
        .map(|(j, n)| (n.as_str(), j))
        .collect();
    let keep = cs
        .names()
        .iter()
        .map(|n| {
            col_of
                .get(n.as_str())
                .map(|&j| means[j] >= cutoff)
                .ok_or_else(|| Error::UnknownConcept(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    cs.retain(&keep)
}

/// Names removed at each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub length: Vec<String>,
    pub class_similarity: Vec<String>,
    pub concept_similarity: Vec<String>,
    pub low_activation: Vec<String>,
}

impl RemovalReport {
    pub fn stage_of(&self, name: &str) -> Option<Stage> {
        [
            (Stage::Length, &self.length),
            (Stage::ClassSimilarity, &self.class_similarity),
            (Stage::ConceptSimilarity, &self.concept_similarity),
            (Stage::LowActivation, &self.low_activation),
        ]
        .into_iter()
        .find(|(_, names)| names.iter().any(|n| n == name))
        .map(|(s, _)| s)
    }
}

/// First three stages (everything that needs no image activations).
pub fn run_text_stages(
    cs: &ConceptSet,
    class_embeddings: &EmbeddingMatrix,
    cfg: &FilterConfig,
) -> Result<(ConceptSet, RemovalReport)> {
    cfg.validate()?;
    let mut report = RemovalReport::default();
    let (cs, removed) = filter_length(cs, cfg.max_len)?;
    report.length = removed;
    let (cs, removed) = filter_similar_to_classes(&cs, class_embeddings, cfg.class_sim_threshold)?;
    report.class_similarity = removed;
    let (cs, removed) = filter_similar_concepts(&cs, cfg.concept_sim_threshold)?;
    report.concept_similarity = removed;
    Ok((cs, report))
}

/// All four stages in order.
pub fn run_pipeline(
    cs: &ConceptSet,
    class_embeddings: &EmbeddingMatrix,
    acts: &ActivationMatrix,
    cfg: &FilterConfig,
) -> Result<(ConceptSet, RemovalReport)> {
    let (cs, mut report) = run_text_stages(cs, class_embeddings, cfg)?;
    let (cs, removed) = filter_low_activation(&cs, acts, cfg.interpretability_cutoff)?;
    report.low_activation = removed;
    Ok((cs, report))
}
