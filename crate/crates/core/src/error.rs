use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("bad magic {found:?}, expected \"CBMF\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found}, expected 1")]
    VersionMismatch { found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("duplicate row id {0:?}")]
    DuplicateRowId(String),
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("class index {index} out of range for {n_classes} classes")]
    ClassOutOfRange { index: usize, n_classes: usize },
    #[error("unknown split tag {0:?}")]
    UnknownSplit(String),
    #[error("sensitive value {0} is not binary")]
    BadSensitive(u8),
    #[error("train split is missing sensitive value {0}")]
    MissingSensitiveValue(u8),
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("class {0:?} has no images")]
    EmptyClass(String),
    #[error("need at least {needed} images, found {found}")]
    TooFewImages { needed: usize, found: usize },
    #[error("column {column} is degenerate (zero variance on train split)")]
    DegenerateColumn { column: usize },
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("adversary accuracy stayed below {threshold} for {epochs} epochs")]
    AdversaryCollapsed { threshold: f64, epochs: usize },
    #[error("cannot bracket target F1 {target} (achievable range [{floor}, 1])")]
    BracketFailed { target: f64, floor: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Optimisation and numeric failures, as opposed to bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::AdversaryCollapsed { .. }
                | Error::BracketFailed { .. }
                | Error::NonFinite { .. }
        )
    }
}
