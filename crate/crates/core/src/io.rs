//! `.cbmf` binary matrices with JSON sidecars.
//!
//! Layout: magic `CBMF`, version `u32 = 1`, `n_rows u64`, `n_cols u64`,
//! then `n_rows * n_cols` little-endian `f32` values, row-major. Names and
//! every other non-numeric field live in `<path>.meta.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{
    ActivationMatrix, DatasetLabels, EmbeddingMatrix, InputKind, LabeledDataset, LinearHead,
    Split, Transform,
};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CBMF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Sidecar path for a matrix file: `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Encode header and payload.
pub fn encode_cbmf(n_rows: usize, n_cols: usize, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n_rows as u64).to_le_bytes());
    out.extend_from_slice(&(n_cols as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode header and payload; returns `(n_rows, n_cols, values)`.
pub fn decode_cbmf(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(Error::BadMagic { found });
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    if &found != MAGIC {
        return Err(Error::BadMagic { found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version });
    }
    let n_rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n_cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = n_rows
        .checked_mul(n_cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Shape(format!("header dimensions overflow: {n_rows} x {n_cols}")))?;
    let found_len = bytes.len() as u64;
    if found_len < expected {
        return Err(Error::Truncated {
            expected,
            found: found_len,
        });
    }
    if found_len > expected {
        return Err(Error::TrailingBytes {
            expected,
            found: found_len,
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n_rows as usize, n_cols as usize, values))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::json(path, e))
}

fn read_payload(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cbmf(&bytes)
}

#[derive(Serialize, Deserialize)]
struct MatrixMeta {
    row_ids: Vec<String>,
}

pub fn write_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    write_bytes(path, &encode_cbmf(m.n_rows(), m.n_cols(), m.values()))?;
    write_json(
        &sidecar_path(path),
        &MatrixMeta {
            row_ids: m.row_ids().to_vec(),
        },
    )
}

pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let (n_rows, n_cols, values) = read_payload(path)?;
    let meta: MatrixMeta = read_json(&sidecar_path(path))?;
    EmbeddingMatrix::new(n_rows, n_cols, values, meta.row_ids)
}

/// Dataset sidecar, also used standalone for label files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub row_ids: Vec<String>,
    pub class_names: Vec<String>,
    pub class_label: Vec<usize>,
    pub sensitive: Vec<u8>,
    pub split: Vec<String>,
    pub attribute_name: String,
}

impl DatasetMeta {
    pub fn from_labels(l: &DatasetLabels) -> Self {
        Self {
            row_ids: l.row_ids().to_vec(),
            class_names: l.class_names().to_vec(),
            class_label: l.class_label().to_vec(),
            sensitive: l.sensitive().to_vec(),
            split: l.split().iter().map(|s| s.as_str().to_string()).collect(),
            attribute_name: l.attribute_name().to_string(),
        }
    }

    pub fn into_labels(self) -> Result<DatasetLabels> {
        let split = self
            .split
            .iter()
            .map(|s| Split::parse(s))
            .collect::<Result<Vec<_>>>()?;
        DatasetLabels::new(
            self.row_ids,
            self.class_label,
            self.sensitive,
            split,
            self.class_names,
            self.attribute_name,
        )
    }
}

pub fn write_dataset(path: &Path, d: &LabeledDataset) -> Result<()> {
    let e = d.embeddings();
    write_bytes(path, &encode_cbmf(e.n_rows(), e.n_cols(), e.values()))?;
    write_json(&sidecar_path(path), &DatasetMeta::from_labels(d.labels()))
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let (n_rows, n_cols, values) = read_payload(path)?;
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    let embeddings = EmbeddingMatrix::new(n_rows, n_cols, values, meta.row_ids.clone())?;
    LabeledDataset::new(embeddings, meta.into_labels()?)
}

/// Labels only, from a dataset sidecar (payload not read).
pub fn read_dataset_labels(path: &Path) -> Result<DatasetLabels> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    meta.into_labels()
}

#[derive(Serialize, Deserialize)]
struct ActivationMeta {
    row_ids: Vec<String>,
    concept_names: Vec<String>,
    transform_log: Vec<Transform>,
}

pub fn write_activations(path: &Path, a: &ActivationMatrix) -> Result<()> {
    write_bytes(path, &encode_cbmf(a.n_images(), a.n_concepts(), a.values()))?;
    write_json(
        &sidecar_path(path),
        &ActivationMeta {
            row_ids: a.row_ids().to_vec(),
            concept_names: a.concept_names().to_vec(),
            transform_log: a.transform_log().to_vec(),
        },
    )
}

pub fn read_activations(path: &Path) -> Result<ActivationMatrix> {
    let (n_rows, n_cols, values) = read_payload(path)?;
    let meta: ActivationMeta = read_json(&sidecar_path(path))?;
    ActivationMatrix::with_log(
        n_rows,
        n_cols,
        values,
        meta.row_ids,
        meta.concept_names,
        meta.transform_log,
    )
}

/// Head sidecar: bias, input kind, optional output names and free-form
/// provenance (training config, trace).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadMeta {
    pub bias: Vec<f32>,
    pub input_kind: InputKind,
    #[serde(default)]
    pub output_names: Vec<String>,
    #[serde(default)]
    pub input_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<serde_json::Value>,
}

impl HeadMeta {
    pub fn for_head(h: &LinearHead) -> Self {
        Self {
            bias: h.bias().to_vec(),
            input_kind: h.input_kind(),
            output_names: Vec::new(),
            input_names: Vec::new(),
            config: None,
            trace: None,
        }
    }
}

pub fn write_head(path: &Path, h: &LinearHead, meta: &HeadMeta) -> Result<()> {
    if meta.bias.as_slice() != h.bias() || meta.input_kind != h.input_kind() {
        return Err(Error::Shape("head sidecar does not describe the head".into()));
    }
    write_bytes(path, &encode_cbmf(h.n_outputs(), h.n_inputs(), h.weights()))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_head(path: &Path) -> Result<(LinearHead, HeadMeta)> {
    let (n_rows, n_cols, values) = read_payload(path)?;
    let meta: HeadMeta = read_json(&sidecar_path(path))?;
    let head = LinearHead::new(n_rows, n_cols, values, meta.bias.clone(), meta.input_kind)?;
    Ok((head, meta))
}

/// Per-row predicted labels keyed by row id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub row_ids: Vec<String>,
    pub labels: Vec<usize>,
}

impl Predictions {
    /// Reorder to match `row_ids`; every id must be present.
    pub fn aligned_to(&self, row_ids: &[String]) -> Result<Vec<usize>> {
        if self.row_ids.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                what: "prediction labels",
                expected: self.row_ids.len(),
                found: self.labels.len(),
            });
        }
        let index: std::collections::HashMap<&str, usize> = self
            .row_ids
            .iter()
            .zip(&self.labels)
            .map(|(id, &l)| (id.as_str(), l))
            .collect();
        row_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("no prediction for row {id:?}")))
            })
            .collect()
    }
}
