//! Network checkpoints: one NPY file per array plus `manifest.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use topoprune_core::pruning::MaskMethod;
use topoprune_core::trainer::{Activation, DenseLayer, DenseNet};

use crate::npy::{self, Descr, NpyArray};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFiles {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: String,
    pub bias: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    pub activation: String,
    pub seed: u64,
    pub layers: Vec<LayerFiles>,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    }
}

fn parse_activation(name: &str) -> Result<Activation, CliError> {
    match name {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(CliError::Validation(format!("unknown activation {other:?}"))),
    }
}

fn write(path: &Path, array: &NpyArray) -> Result<(), CliError> {
    npy::write_file(path, array).map_err(|e| CliError::npy(path, e))
}

pub fn save(dir: &Path, net: &DenseNet, seed: u64) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (k, (layer, mask)) in net.layers().iter().zip(net.masks()).enumerate() {
        let files = LayerFiles {
            inputs: layer.inputs(),
            outputs: layer.outputs(),
            weights: format!("layer_{k}.npy"),
            bias: format!("bias_{k}.npy"),
            mask: mask.as_ref().map(|_| format!("mask_{k}.npy")),
        };
        let weights = npy::weights_to_array(&layer.weights, Descr::F8).map_err(|e| CliError::npy(dir, e))?;
        write(&dir.join(&files.weights), &weights)?;
        let bias = NpyArray {
            descr: Descr::F8,
            shape: vec![layer.bias.len()],
            data: layer.bias.iter().flat_map(|b| b.to_le_bytes()).collect(),
        };
        write(&dir.join(&files.bias), &bias)?;
        if let (Some(m), Some(name)) = (mask, &files.mask) {
            write(&dir.join(name), &npy::mask_to_array(m))?;
        }
        layers.push(files);
    }
    let manifest = Manifest {
        tool_version: crate::report::TOOL_VERSION.to_string(),
        activation: activation_name(net.activation()).to_string(),
        seed,
        layers,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Loads a checkpoint written by [`save`]. Masks are attached as T-IMP or MP
/// masks alike; the method tag is not stored.
pub fn load(dir: &Path) -> Result<(DenseNet, Manifest), CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let read = |name: &str| {
        let p = dir.join(name);
        npy::read_file(&p).map_err(|e| CliError::npy(&p, e))
    };

    let mut layers = Vec::with_capacity(manifest.layers.len());
    let mut masks = Vec::new();
    for files in &manifest.layers {
        let weights = npy::weights_from_array(&read(&files.weights)?).map_err(|e| CliError::npy(&dir.join(&files.weights), e))?;
        if (weights.rows(), weights.cols()) != (files.inputs, files.outputs) {
            return Err(CliError::Validation(format!(
                "{} is {}x{}, manifest says {}x{}",
                files.weights,
                weights.rows(),
                weights.cols(),
                files.inputs,
                files.outputs
            )));
        }
        let bias = read(&files.bias)?;
        if bias.shape != [files.outputs] || bias.descr != Descr::F8 {
            return Err(CliError::Validation(format!("{} must be a <f8 vector of length {}", files.bias, files.outputs)));
        }
        if let Some(name) = &files.mask {
            let m = npy::mask_from_array(&read(name)?, MaskMethod::Magnitude).map_err(|e| CliError::npy(&dir.join(name), e))?;
            masks.push(m);
        }
        layers.push(DenseLayer { weights, bias: bias.to_f64() });
    }
    let mut net = DenseNet::new(layers, parse_activation(&manifest.activation)?)?;
    if !masks.is_empty() {
        if masks.len() != manifest.layers.len() {
            return Err(CliError::Validation("either every layer has a mask or none does".into()));
        }
        net.set_masks(masks)?;
    }
    Ok((net, manifest))
}
