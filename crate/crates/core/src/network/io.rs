use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, GeometryMode, Linear, SimBlock, SrenModel};
use crate::fourier_argand::BasisConfig;
use crate::geometry::GridConfig;
use crate::simconv::SimConvLayer;
use crate::tensorcore::srtn::Tensor;
use crate::{Error, Result};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub architecture: Architecture,
    pub mode: GeometryMode,
    pub basis: BasisConfig,
    pub grid: GridConfig,
    pub seed: u64,
    pub param_count: usize,
    pub tensors: Vec<TensorEntry>,
    pub quad_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
}

fn tensor_layout(model: &SrenModel) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (b, block) in model.blocks.iter().enumerate() {
        for (l, layer) in block.layers.iter().enumerate() {
            out.push((
                format!("block{b}.layer{l}.weight"),
                vec![layer.out_channels, layer.in_channels, layer.taps()],
            ));
            out.push((format!("block{b}.layer{l}.bias"), vec![layer.out_channels]));
        }
    }
    out.push((
        "head.weight".into(),
        vec![model.head.outputs, model.head.inputs],
    ));
    out.push(("head.bias".into(), vec![model.head.outputs]));
    out
}

/// Writes `manifest.json` plus one SRTN file per parameter tensor.
pub fn save_model(model: &SrenModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for ((name, dims), data) in tensor_layout(model).into_iter().zip(model.params()) {
        let file = format!("{name}.srtn");
        Tensor::new(dims.clone(), data.to_vec())?.write(dir.join(&file))?;
        tensors.push(TensorEntry { name, file, dims });
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        architecture: model.arch.clone(),
        mode: model.mode,
        basis: model.basis,
        grid: model.grid,
        seed: model.seed,
        param_count: model.param_count(),
        tensors,
        quad_weights: model
            .blocks
            .iter()
            .map(|b| b.layers.iter().map(|l| l.quad_weight).collect())
            .collect(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<SrenModel> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::Format(format!(
            "manifest schema {} is not supported (expected {MANIFEST_SCHEMA})",
            manifest.schema
        )));
    }
    let template = SrenModel::new(
        manifest.architecture.clone(),
        manifest.mode,
        manifest.basis,
        manifest.grid,
        manifest.seed,
    )?;
    let layout = tensor_layout(&template);
    if layout.len() != manifest.tensors.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, architecture needs {}",
            manifest.tensors.len(),
            layout.len()
        )));
    }
    let mut values = Vec::with_capacity(layout.len());
    for ((name, dims), entry) in layout.iter().zip(&manifest.tensors) {
        if &entry.name != name || &entry.dims != dims {
            return Err(Error::Format(format!(
                "tensor {} {:?} does not match expected {name} {dims:?}",
                entry.name, entry.dims
            )));
        }
        let t = Tensor::read(dir.join(&entry.file))?;
        if &t.dims != dims {
            return Err(Error::shape(format!("{dims:?}"), format!("{:?}", t.dims)));
        }
        values.push(t.data);
    }
    let mut values = values.into_iter();
    let mut blocks = Vec::new();
    for (b, block) in template.blocks.iter().enumerate() {
        let mut layers = Vec::new();
        for (l, layer) in block.layers.iter().enumerate() {
            let quad_weight = manifest
                .quad_weights
                .get(b)
                .and_then(|q| q.get(l))
                .copied()
                .ok_or_else(|| {
                    Error::Format(format!("missing quad weight for block {b} layer {l}"))
                })?;
            layers.push(SimConvLayer {
                weights: values.next().unwrap(),
                bias: values.next().unwrap(),
                quad_weight,
                ..layer.clone()
            });
        }
        blocks.push(SimBlock { layers });
    }
    let head = Linear {
        weights: values.next().unwrap(),
        bias: values.next().unwrap(),
        ..template.head.clone()
    };
    SrenModel::from_parts(
        manifest.architecture,
        manifest.mode,
        manifest.basis,
        manifest.grid,
        manifest.seed,
        blocks,
        head,
    )
}
