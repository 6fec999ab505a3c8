//! Architecture spec files.
//!
//! ```json
//! {"layers": [{"type": "dense", "in": 784, "out": 100},
//!             {"type": "conv2d", "spatial": [28, 28], "kernel": [3, 3], "stride": [1, 1], "pad": [1, 1]},
//!             {"type": "recurrent", "hidden": 100}]}
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use serde::Deserialize;
use topoprune_core::compression::{ArchSpec, Conv2dSpec, LayerSpec};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchFile {
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum LayerEntry {
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
    },
    Conv2d {
        spatial: [usize; 2],
        kernel: [usize; 2],
        stride: [usize; 2],
        pad: [usize; 2],
    },
    Recurrent {
        hidden: usize,
    },
}

impl From<LayerEntry> for LayerSpec {
    fn from(e: LayerEntry) -> Self {
        match e {
            LayerEntry::Dense { inputs, outputs } => LayerSpec::Dense { inputs, outputs },
            LayerEntry::Conv2d { spatial, kernel, stride, pad } => {
                LayerSpec::Conv2d(Conv2dSpec { spatial, kernel, stride, pad })
            }
            LayerEntry::Recurrent { hidden } => LayerSpec::Recurrent { hidden },
        }
    }
}

pub fn parse_arch_str(text: &str) -> Result<ArchSpec, CliError> {
    let file: ArchFile =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("architecture spec: {e}")))?;
    Ok(ArchSpec::new(file.layers.into_iter().map(LayerSpec::from).collect())?)
}

pub fn parse_arch(path: &Path) -> Result<ArchSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_arch_str(&text).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Layer widths of an all-dense, chained spec.
pub fn dense_dims(arch: &ArchSpec) -> Result<Vec<usize>, CliError> {
    let mut dims = Vec::with_capacity(arch.layers.len() + 1);
    for (k, layer) in arch.layers.iter().enumerate() {
        let LayerSpec::Dense { inputs, outputs } = *layer else {
            return Err(CliError::Validation(format!("layer {k} is not dense; training supports dense layers only")));
        };
        match dims.last() {
            None => dims.push(inputs),
            Some(&prev) if prev == inputs => {}
            Some(&prev) => {
                return Err(CliError::Validation(format!(
                    "layer {k} expects {inputs} inputs but the previous layer has {prev} outputs"
                )))
            }
        }
        dims.push(outputs);
    }
    Ok(dims)
}
