use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::UsageError;

/// Machine-readable failure record written in place of a result.
#[derive(Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl ErrorReport {
    pub fn from_error(e: &lqvi::Error) -> Self {
        let step = match e {
            lqvi::Error::AtStep { step, .. } => Some(*step),
            _ => None,
        };
        ErrorReport {
            error: e.kind().to_string(),
            message: e.to_string(),
            step,
        }
    }
}

pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Reads an input file; a missing or unreadable file is a usage error.
pub fn read_input(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())).into())
}
