//! Typed containers shared by every stage of the pipeline.
//!
//! Constructors validate invariants, so a value of any of these types is
//! always well formed. Mutation goes through methods that keep the
//! invariants (and, for activations, append to the transform log).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateRowId(id.clone()));
        }
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    pub values: &'a [f32],
    pub n_rows: usize,
    pub n_cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn new(values: &'a [f32], n_rows: usize, n_cols: usize) -> Result<Self> {
        check_len("matrix values", n_rows * n_cols, values.len())?;
        Ok(Self {
            values,
            n_rows,
            n_cols,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f32]> + 'a {
        let n_cols = self.n_cols.max(1);
        self.values.chunks(n_cols).take(self.n_rows)
    }
}

/// Dense float matrix with one named row per image or text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f32>,
    row_ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f32>, row_ids: Vec<String>) -> Result<Self> {
        check_len("matrix values", n_rows * n_cols, values.len())?;
        check_len("row_ids", n_rows, row_ids.len())?;
        check_finite(&values)?;
        check_unique(&row_ids)?;
        Ok(Self {
            n_rows,
            n_cols,
            values,
            row_ids,
        })
    }

    /// Build from rows; ids default to the row index.
    pub fn from_rows(rows: &[Vec<f32>], row_ids: Option<Vec<String>>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        let ids = row_ids.unwrap_or_else(|| (0..rows.len()).map(|i| i.to_string()).collect());
        Self::new(rows.len(), n_cols, values, ids)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView {
            values: &self.values,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
        }
    }

    /// Keep the listed rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: self.n_rows,
                });
            }
            values.extend_from_slice(self.row(r));
            ids.push(self.row_ids[r].clone());
        }
        Self::new(rows.len(), self.n_cols, values, ids)
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f32>, Vec<String>) {
        (self.n_rows, self.n_cols, self.values, self.row_ids)
    }
}

/// Binary sensitive attribute. Index 0 is male, 1 is female.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sex {
    Male = 0,
    Female = 1,
}

impl Sex {
    pub fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-row class label, sensitive attribute and split tag.
///
/// Sensitive values are stored as `0`/`1` (see [`Sex`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLabels {
    row_ids: Vec<String>,
    class_label: Vec<usize>,
    sensitive: Vec<u8>,
    split: Vec<Split>,
    class_names: Vec<String>,
    attribute_name: String,
}

impl DatasetLabels {
    pub fn new(
        row_ids: Vec<String>,
        class_label: Vec<usize>,
        sensitive: Vec<u8>,
        split: Vec<Split>,
        class_names: Vec<String>,
        attribute_name: impl Into<String>,
    ) -> Result<Self> {
        let n = row_ids.len();
        check_len("class_label", n, class_label.len())?;
        check_len("sensitive", n, sensitive.len())?;
        check_len("split", n, split.len())?;
        check_unique(&row_ids)?;
        let n_classes = class_names.len();
        if let Some(&index) = class_label.iter().find(|&&c| c >= n_classes) {
            return Err(Error::ClassOutOfRange { index, n_classes });
        }
        if let Some(&s) = sensitive.iter().find(|&&s| s > 1) {
            return Err(Error::BadSensitive(s));
        }
        let mut present = [false; 2];
        for (s, sp) in sensitive.iter().zip(&split) {
            if *sp == Split::Train {
                present[*s as usize] = true;
            }
        }
        for (v, ok) in present.iter().enumerate() {
            if !ok {
                return Err(Error::MissingSensitiveValue(v as u8));
            }
        }
        Ok(Self {
            row_ids,
            class_label,
            sensitive,
            split,
            class_names,
            attribute_name: attribute_name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn class_label(&self) -> &[usize] {
        &self.class_label
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_name(&self) -> &str {
        &self.attribute_name
    }

    /// Row indices carrying the given split tag, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same rows with class labels replaced (e.g. by predictions).
    pub fn with_class_labels(&self, class_label: Vec<usize>) -> Result<Self> {
        Self::new(
            self.row_ids.clone(),
            class_label,
            self.sensitive.clone(),
            self.split.clone(),
            self.class_names.clone(),
            self.attribute_name.clone(),
        )
    }

    /// Swap the two sensitive values.
    pub fn with_sensitive_flipped(&self) -> Self {
        let mut out = self.clone();
        out.sensitive.iter_mut().for_each(|s| *s = 1 - *s);
        out
    }
}

/// Image embeddings with their labels. Row ids agree position by position.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    embeddings: EmbeddingMatrix,
    labels: DatasetLabels,
}

impl LabeledDataset {
    pub fn new(embeddings: EmbeddingMatrix, labels: DatasetLabels) -> Result<Self> {
        check_len("labels", embeddings.n_rows(), labels.len())?;
        if let Some(i) = (0..labels.len()).find(|&i| embeddings.row_ids()[i] != labels.row_ids()[i]) {
            return Err(Error::Shape(format!(
                "row {i}: embedding id {:?} != label id {:?}",
                embeddings.row_ids()[i],
                labels.row_ids()[i]
            )));
        }
        Ok(Self { embeddings, labels })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &DatasetLabels {
        &self.labels
    }

    pub fn into_parts(self) -> (EmbeddingMatrix, DatasetLabels) {
        (self.embeddings, self.labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    ImageEmbedding,
    ConceptActivation,
}

/// Single linear layer: `logits = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    n_outputs: usize,
    n_inputs: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    input_kind: InputKind,
}

impl LinearHead {
    pub fn new(
        n_outputs: usize,
        n_inputs: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        input_kind: InputKind,
    ) -> Result<Self> {
        if n_outputs < 2 {
            return Err(Error::InvalidParameter(format!(
                "a head needs at least 2 outputs, got {n_outputs}"
            )));
        }
        check_len("weights", n_outputs * n_inputs, weights.len())?;
        check_len("bias", n_outputs, bias.len())?;
        check_finite(&weights)?;
        check_finite(&bias)?;
        Ok(Self {
            n_outputs,
            n_inputs,
            weights,
            bias,
            input_kind,
        })
    }

    pub fn zeros(n_outputs: usize, n_inputs: usize, input_kind: InputKind) -> Result<Self> {
        Self::new(
            n_outputs,
            n_inputs,
            vec![0.0; n_outputs * n_inputs],
            vec![0.0; n_outputs],
            input_kind,
        )
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn input_kind(&self) -> InputKind {
        self.input_kind
    }

    /// Weights of one output row.
    pub fn weight_row(&self, output: usize) -> &[f32] {
        &self.weights[output * self.n_inputs..(output + 1) * self.n_inputs]
    }

    pub fn weight(&self, output: usize, input: usize) -> f32 {
        self.weights[output * self.n_inputs + input]
    }

    /// Set one weight; the value must be finite.
    pub fn set_weight(&mut self, output: usize, input: usize, value: f32) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                index: output * self.n_inputs + input,
            });
        }
        self.weights[output * self.n_inputs + input] = value;
        Ok(())
    }

    /// Logit of one output, accumulated in input order in f64.
    pub fn logit(&self, output: usize, x: &[f32]) -> f64 {
        let acc: f64 = self
            .weight_row(output)
            .iter()
            .zip(x)
            .map(|(&w, &v)| w as f64 * v as f64)
            .sum();
        acc + self.bias[output] as f64
    }

    /// Count of nonzero weights per output row.
    pub fn nonzero_per_output(&self) -> Vec<usize> {
        (0..self.n_outputs)
            .map(|c| self.weight_row(c).iter().filter(|w| **w != 0.0).count())
            .collect()
    }
}

/// One entry of an activation matrix's transform history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Topk { k: usize },
    Quantize { step: f64 },
    Zeroed { indices: Vec<usize> },
}

/// Images x concepts similarity matrix with its transform history.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    n_images: usize,
    n_concepts: usize,
    values: Vec<f32>,
    row_ids: Vec<String>,
    concept_names: Vec<String>,
    transform_log: Vec<Transform>,
}

impl ActivationMatrix {
    pub fn new(
        n_images: usize,
        n_concepts: usize,
        values: Vec<f32>,
        row_ids: Vec<String>,
        concept_names: Vec<String>,
    ) -> Result<Self> {
        Self::with_log(n_images, n_concepts, values, row_ids, concept_names, Vec::new())
    }

    pub fn with_log(
        n_images: usize,
        n_concepts: usize,
        values: Vec<f32>,
        row_ids: Vec<String>,
        concept_names: Vec<String>,
        transform_log: Vec<Transform>,
    ) -> Result<Self> {
        check_len("activation values", n_images * n_concepts, values.len())?;
        check_len("row_ids", n_images, row_ids.len())?;
        check_len("concept_names", n_concepts, concept_names.len())?;
        check_finite(&values)?;
        check_unique(&row_ids)?;
        let mut seen = HashSet::new();
        for n in &concept_names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let m = Self {
            n_images,
            n_concepts,
            values,
            row_ids,
            concept_names,
            transform_log,
        };
        m.check_log()?;
        Ok(m)
    }

    fn check_log(&self) -> Result<()> {
        for t in &self.transform_log {
            match t {
                Transform::Topk { k } => {
                    if let Some(i) = self.rows().position(|r| r.iter().filter(|v| **v != 0.0).count() > *k) {
                        return Err(Error::Shape(format!("row {i} has more than {k} nonzeros after topk")));
                    }
                }
                Transform::Zeroed { indices } => {
                    for &j in indices {
                        if j >= self.n_concepts {
                            return Err(Error::IndexOutOfRange {
                                index: j,
                                bound: self.n_concepts,
                            });
                        }
                        if self.rows().any(|r| r[j] != 0.0) {
                            return Err(Error::Shape(format!("zeroed column {j} is not zero")));
                        }
                    }
                }
                Transform::Quantize { .. } => {}
            }
        }
        Ok(())
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_concepts(&self) -> usize {
        self.n_concepts
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn concept_names(&self) -> &[String] {
        &self.concept_names
    }

    pub fn transform_log(&self) -> &[Transform] {
        &self.transform_log
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_concepts..(i + 1) * self.n_concepts]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.n_concepts + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks(self.n_concepts.max(1)).take(self.n_images)
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView {
            values: &self.values,
            n_rows: self.n_images,
            n_cols: self.n_concepts,
        }
    }

    /// Replace values by a transform of themselves and append to the log.
    /// Crate-internal: transforms live in [`crate::bottleneck`].
    pub(crate) fn transformed(&self, values: Vec<f32>, t: Transform) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        let mut log = self.transform_log.clone();
        log.push(t);
        Self {
            n_images: self.n_images,
            n_concepts: self.n_concepts,
            values,
            row_ids: self.row_ids.clone(),
            concept_names: self.concept_names.clone(),
            transform_log: log,
        }
    }

    /// Keep the listed rows in order; the log is carried over.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_concepts);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n_images {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: self.n_images,
                });
            }
            values.extend_from_slice(self.row(r));
            ids.push(self.row_ids[r].clone());
        }
        Ok(Self {
            n_images: rows.len(),
            n_concepts: self.n_concepts,
            values,
            row_ids: ids,
            concept_names: self.concept_names.clone(),
            transform_log: self.transform_log.clone(),
        })
    }

    /// Keep the listed concept columns in order. Zeroed-index entries in
    /// the log are remapped; dropped columns disappear from them.
    pub fn select_concepts(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&index) = cols.iter().find(|&&c| c >= self.n_concepts) {
            return Err(Error::IndexOutOfRange {
                index,
                bound: self.n_concepts,
            });
        }
        let mut values = Vec::with_capacity(self.n_images * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&c| r[c]));
        }
        let remap = |old: usize| cols.iter().position(|&c| c == old);
        // A top-k bound still holds for any column subset.
        let log = self
            .transform_log
            .iter()
            .map(|t| match t {
                Transform::Zeroed { indices } => Transform::Zeroed {
                    indices: indices.iter().filter_map(|&i| remap(i)).collect(),
                },
                other => other.clone(),
            })
            .collect();
        Self::with_log(
            self.n_images,
            cols.len(),
            values,
            self.row_ids.clone(),
            cols.iter().map(|&c| self.concept_names[c].clone()).collect(),
            log,
        )
    }

    /// Reinterpret as a plain matrix keyed by row id.
    pub fn to_embedding_matrix(&self) -> EmbeddingMatrix {
        EmbeddingMatrix {
            n_rows: self.n_images,
            n_cols: self.n_concepts,
            values: self.values.clone(),
            row_ids: self.row_ids.clone(),
        }
    }
}
