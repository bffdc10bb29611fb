//! Self-describing model files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Where a model's randomness and data came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub init_seed: u64,
    /// Seed of the shuffling stream used in training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    /// Training data file or task name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
}

impl Lineage {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            init_seed: seed,
            ..Default::default()
        }
    }
}

/// Summary of the run that produced the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk form of a [`Model`]. Values are written with shortest round-trip
/// decimal formatting, so reloading restores every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub lineage: Lineage,
    pub training: TrainingMeta,
    pub tensors: Vec<NamedTensor>,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            spec: m.spec,
            lineage: m.lineage.clone(),
            training: m.training.clone(),
            tensors: m
                .layout
                .segments
                .iter()
                .map(|s| NamedTensor {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    values: m.params[s.range.clone()].to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Model> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        let mut model =
            Model::init(f.spec).map_err(|e| Error::format(format!("bad model spec: {e}")))?;
        if f.tensors.len() != model.layout.segments.len() {
            return Err(Error::format(format!(
                "model file has {} tensors, spec needs {}",
                f.tensors.len(),
                model.layout.segments.len()
            )));
        }
        for (t, s) in f.tensors.iter().zip(&model.layout.segments) {
            if t.name != s.name || t.shape != s.shape || t.values.len() != s.range.len() {
                return Err(Error::format(format!(
                    "tensor {} does not match layout entry {} {:?}",
                    t.name, s.name, s.shape
                )));
            }
        }
        for (t, s) in f.tensors.iter().zip(model.layout.segments.clone()) {
            model.params[s.range].copy_from_slice(&t.values);
        }
        if model.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite parameter in model file"));
        }
        model.lineage = f.lineage;
        model.training = f.training;
        Ok(model)
    }
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile =
            serde_json::from_str(s).map_err(|e| Error::format(format!("model file: {e}")))?;
        Model::try_from(f)
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(&mut w, &ModelFile::from(model))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let f: ModelFile = serde_json::from_reader(BufReader::new(File::open(path.as_ref())?))
        .map_err(|e| Error::format(format!("model file: {e}")))?;
    Model::try_from(f)
}
