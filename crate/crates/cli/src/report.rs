//! JSON report envelope and CSV side outputs.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(bytes)) }
    }

    pub fn of_file(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self::of_bytes(path, &bytes))
    }
}

/// Everything a command prints. Identical inputs and seed give identical
/// bytes, so no wall-clock data is recorded.
#[derive(Debug, Serialize)]
pub struct ReportEnvelope<T> {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub payload: T,
}

impl<T: Serialize> ReportEnvelope<T> {
    pub fn new(command: &'static str, inputs: Vec<InputDigest>, seed: Option<u64>, payload: T) -> Self {
        Self { tool_version: TOOL_VERSION, command, inputs, seed, payload }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), CliError> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Writes serializable rows with a header line.
pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        let d = InputDigest::of_bytes(Path::new("x"), b"");
        assert_eq!(d.sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn envelope_shape() {
        let env = ReportEnvelope::new("bound", vec![], None, 0.5);
        let mut out = Vec::new();
        env.write_to(&mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["command"], "bound");
        assert_eq!(v["payload"], 0.5);
        assert!(v.get("seed").is_none());
    }
}
