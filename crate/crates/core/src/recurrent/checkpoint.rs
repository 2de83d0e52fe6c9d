//! Versioned JSON container for a trained model and the preprocessing it
//! expects. Values are written with shortest round-trip formatting, so a
//! save/load cycle is exact.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkit::Tensor;
use crate::preprocess::ScalerState;

use super::{Model, ModelError, ModelSpec};

pub const CHECKPOINT_FORMAT: &str = "rcad-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    /// Input features the model consumes, in order.
    pub features: Vec<String>,
    /// Scaler fitted on the training split, keyed by `features`.
    pub scaler: Option<ScalerState>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &Model, features: Vec<String>, scaler: Option<ScalerState>) -> Self {
        let tensors = model
            .params()
            .named()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.values().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: model.spec().clone(),
            features,
            scaler,
            tensors,
        }
    }

    pub fn model(&self) -> Result<Model, ModelError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.features.len() != self.spec.input_size {
            return Err(ModelError::Checkpoint(format!(
                "{} feature names for input size {}",
                self.features.len(),
                self.spec.input_size
            )));
        }
        self.spec.validate()?;
        let mut by_name: HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut failure = None;
        let params = self.spec.shapes().map_named(&mut |name, shape| {
            match by_name.remove(name) {
                Some(t) if t.shape == *shape => {
                    Tensor::new(t.shape.clone(), t.values.clone()).unwrap_or_else(|e| {
                        failure.get_or_insert(format!("tensor {name}: {e}"));
                        Tensor::zeros(shape)
                    })
                }
                Some(t) => {
                    failure.get_or_insert(format!(
                        "tensor {name} has shape {:?}, spec expects {shape:?}",
                        t.shape
                    ));
                    Tensor::zeros(shape)
                }
                None => {
                    failure.get_or_insert(format!("tensor {name} missing"));
                    Tensor::zeros(shape)
                }
            }
        });
        if let Some(msg) = failure {
            return Err(ModelError::Checkpoint(msg));
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(ModelError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Model::from_parts(self.spec.clone(), params)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
