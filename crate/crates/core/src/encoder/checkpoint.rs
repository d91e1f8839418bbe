//! Versioned JSON checkpoint holding the encoder config and every parameter
//! tensor with its explicit shape. Floats are written in shortest round-trip
//! form and parsed exactly, so a reloaded model reproduces embeddings bitwise.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{EncoderConfig, ModelState};
use crate::error::{Error, Result};
use crate::nn::Dense;

pub const FORMAT: &str = "statpool-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    config: EncoderConfig,
    tensors: Vec<Tensor>,
}

fn matrix(name: String, m: &Array2<f64>) -> Tensor {
    Tensor {
        name,
        shape: vec![m.nrows(), m.ncols()],
        data: m.iter().copied().collect(),
    }
}

fn vector(name: String, v: &Array1<f64>) -> Tensor {
    Tensor {
        name,
        shape: vec![v.len()],
        data: v.to_vec(),
    }
}

pub fn to_string(model: &ModelState) -> Result<String> {
    let mut tensors = Vec::new();
    for (i, layer) in model.frame_layers.iter().enumerate() {
        tensors.push(matrix(format!("frame.{i}.weight"), &layer.weight));
        tensors.push(vector(format!("frame.{i}.bias"), &layer.bias));
    }
    tensors.push(vector("pooled.shift".into(), &model.pooled_shift));
    tensors.push(vector("pooled.scale".into(), &model.pooled_scale));
    tensors.push(matrix("segment.weight".into(), &model.segment.weight));
    tensors.push(vector("segment.bias".into(), &model.segment.bias));
    tensors.push(matrix("classes".into(), &model.classes));
    let container = Container {
        format: FORMAT.into(),
        version: VERSION,
        config: model.config.clone(),
        tensors,
    };
    Ok(serde_json::to_string(&container)?)
}

pub fn from_str(text: &str) -> Result<ModelState> {
    let container: Container = serde_json::from_str(text)?;
    if container.format != FORMAT {
        return Err(Error::InvalidConfig(format!(
            "not a checkpoint: format `{}`",
            container.format
        )));
    }
    if container.version != VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint version {}",
            container.version
        )));
    }
    // Initialize to get the expected shapes, then overwrite every tensor.
    let mut model = ModelState::init(container.config)?;
    let mut tensors = container.tensors.into_iter();
    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let t = tensors
            .next()
            .ok_or_else(|| Error::ShapeMismatch(format!("checkpoint is missing tensor `{name}`")))?;
        if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{}` with shape {:?} does not match expected `{name}` {:?}",
                t.name, t.shape, shape
            )));
        }
        Ok(t.data)
    };
    let load_dense = |layer: &mut Dense, prefix: &str, take: &mut dyn FnMut(&str, &[usize]) -> Result<Vec<f64>>| -> Result<()> {
        let (rows, cols) = layer.weight.dim();
        let w = take(&format!("{prefix}.weight"), &[rows, cols])?;
        layer.weight = Array2::from_shape_vec((rows, cols), w).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let b = take(&format!("{prefix}.bias"), &[rows])?;
        layer.bias = Array1::from(b);
        Ok(())
    };
    for (i, layer) in model.frame_layers.iter_mut().enumerate() {
        load_dense(layer, &format!("frame.{i}"), &mut take)?;
    }
    let width = model.pooled_shift.len();
    model.pooled_shift = Array1::from(take("pooled.shift", &[width])?);
    model.pooled_scale = Array1::from(take("pooled.scale", &[width])?);
    load_dense(&mut model.segment, "segment", &mut take)?;
    let dims = model.classes.dim();
    let c = take("classes", &[dims.0, dims.1])?;
    model.classes = Array2::from_shape_vec(dims, c).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    if tensors.next().is_some() {
        return Err(Error::ShapeMismatch("checkpoint has extra tensors".into()));
    }
    if !model.is_finite() {
        return Err(Error::InvalidConfig("checkpoint contains non-finite parameters".into()));
    }
    Ok(model)
}

pub fn save(model: &ModelState, path: &Path) -> Result<()> {
    crate::io_util::write_atomic(path, to_string(model)?.as_bytes())
}

pub fn load(path: &Path) -> Result<ModelState> {
    from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pooling::PoolingConfig;

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let cfg = EncoderConfig::new(3, PoolingConfig::parse("mean-std").unwrap(), 4);
        let model = ModelState::init(cfg).unwrap();
        let text = to_string(&model).unwrap();
        assert!(from_str(&text.replace(FORMAT, "other")).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"].as_array_mut().unwrap().pop();
        assert!(matches!(from_str(&v.to_string()), Err(Error::ShapeMismatch(_))));
        assert_eq!(from_str(&text).unwrap(), model);
    }
}
