//! Concept bottleneck classification heads, information-leakage reducing
//! transforms, adversarial debiasing, and leakage / bias-amplification
//! fairness metrics.
//!
//! The pipeline runs downstream of frozen encoders: image and text
//! embeddings arrive as `.cbmf` matrices, concept activations are cosine
//! similarities, and every model is a single linear layer.

pub mod adversarial;
pub mod bottleneck;
pub mod concepts;
pub mod data;
pub mod error;
pub mod explain;
pub mod fairness;
pub mod heads;
pub mod ingest;
pub mod io;
pub mod par;
pub mod plot;
pub mod rng;
pub mod sweep;
pub mod synth;

mod linalg;

pub use data::{
    ActivationMatrix, DatasetLabels, EmbeddingMatrix, InputKind, LabeledDataset, LinearHead,
    MatrixView, Sex, Split, Transform,
};
pub use error::{Error, Result};
