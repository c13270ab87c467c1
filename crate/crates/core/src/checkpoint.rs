//! JSON parameter dumps for the visual and graph models.
//!
//! A checkpoint records the model configuration and, for every parameter in
//! `named_params` order, its name, shape and row-major values. Loading rebuilds
//! the model from the configuration and checks every name and shape.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MmgnConfig, MmgnModel};
use crate::nn::Parameterized;
use crate::visual::{VisualConfig, VisualModel};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Visual {
        config: VisualConfig,
        classifier_classes: Vec<usize>,
    },
    Mmgn {
        config: MmgnConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelSpec,
    pub params: Vec<ParamRecord>,
}

fn records(model: &dyn Parameterized) -> Vec<ParamRecord> {
    model
        .named_params()
        .into_iter()
        .map(|(name, p)| {
            let (r, c) = p.shape();
            ParamRecord {
                name,
                shape: [r, c],
                values: p.value.iter().copied().collect(),
            }
        })
        .collect()
}

fn restore(model: &mut dyn Parameterized, params: &[ParamRecord]) -> Result<()> {
    let names: Vec<(String, (usize, usize))> = model
        .named_params()
        .into_iter()
        .map(|(n, p)| (n, p.shape()))
        .collect();
    if names.len() != params.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} parameters, model has {}",
            params.len(),
            names.len()
        )));
    }
    for ((name, shape), rec) in names.iter().zip(params) {
        if *name != rec.name || [shape.0, shape.1] != rec.shape {
            return Err(Error::Shape(format!(
                "expected `{name}` {shape:?}, found `{}` {:?}",
                rec.name, rec.shape
            )));
        }
    }
    for (p, rec) in model.params_mut().into_iter().zip(params) {
        p.value = Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.values.clone())
            .map_err(|e| Error::Shape(format!("`{}`: {e}", rec.name)))?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_visual(model: &VisualModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: ModelSpec::Visual {
                config: model.config,
                classifier_classes: model.classifiers.iter().map(|c| c.weight.shape().1).collect(),
            },
            params: records(model),
        }
    }

    pub fn from_mmgn(model: &MmgnModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: ModelSpec::Mmgn {
                config: model.config.clone(),
            },
            params: records(model),
        }
    }

    pub fn to_visual(&self) -> Result<VisualModel> {
        let ModelSpec::Visual {
            config,
            classifier_classes,
        } = &self.model
        else {
            return Err(Error::Invalid("checkpoint does not hold a visual model".into()));
        };
        let mut model = VisualModel::new(*config, 0);
        if !classifier_classes.is_empty() {
            model.init_classifiers(classifier_classes, 0);
        }
        restore(&mut model, &self.params)?;
        Ok(model)
    }

    pub fn to_mmgn(&self) -> Result<MmgnModel> {
        let ModelSpec::Mmgn { config } = &self.model else {
            return Err(Error::Invalid("checkpoint does not hold a graph model".into()));
        };
        let mut model = MmgnModel::new(config.clone(), 0)?;
        restore(&mut model, &self.params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let ck: Checkpoint = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: ck.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        Ok(ck)
    }
}
