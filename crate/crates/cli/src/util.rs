use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use cbm_fair::io::{self, DatasetMeta};
use cbm_fair::{ActivationMatrix, DatasetLabels};

/// Bad invocation: exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(ce) = cause.downcast_ref::<cbm_fair::Error>() {
            return match ce {
                ce if ce.is_numeric() => 3,
                cbm_fair::Error::InvalidParameter(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// Config file contents, or defaults without one. Flags are applied by the
/// caller afterwards.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => io::read_json(p).map_err(|e| usage(format!("bad config file: {e}"))),
    }
}

/// Labels from a dataset `.cbmf` (its sidecar) or a standalone labels
/// `.json`.
pub fn load_labels(path: &Path) -> Result<DatasetLabels> {
    let labels = if path.extension().is_some_and(|e| e == "json") {
        io::read_json::<DatasetMeta>(path)?.into_labels()?
    } else {
        io::read_dataset_labels(path)?
    };
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &DatasetLabels) -> Result<()> {
    Ok(io::write_json(path, &DatasetMeta::from_labels(labels))?)
}

pub fn check_aligned(acts: &ActivationMatrix, labels: &DatasetLabels) -> Result<()> {
    if acts.row_ids() != labels.row_ids() {
        return Err(cbm_fair::Error::Shape("activation rows do not match label rows".into()).into());
    }
    Ok(())
}

/// Record the command and its effective config in a JSON sidecar.
pub fn echo_config(json_path: &Path, command: &str, config: &impl Serialize) -> Result<()> {
    let mut v: Value = io::read_json(json_path)?;
    let obj = v
        .as_object_mut()
        .with_context(|| format!("{} is not a JSON object", json_path.display()))?;
    obj.insert("cli".into(), provenance(command, config)?);
    Ok(io::write_json(json_path, &v)?)
}

pub fn provenance(command: &str, config: &impl Serialize) -> Result<Value> {
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(config)?,
    }))
}

/// Echo into the sidecar of a `.cbmf` output.
pub fn echo_matrix_config(cbmf: &Path, command: &str, config: &impl Serialize) -> Result<()> {
    echo_config(&io::sidecar_path(cbmf), command, config)
}

pub fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}
