//! Model checkpoints as JSON: configuration, seeds and every named
//! parameter array.

use std::fs;
use std::path::Path;

use helprank_core::kernel::Matrix;
use helprank_core::model::{Model, ModelConfig};
use helprank_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const FORMAT: &str = "helprank-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub best_epoch: Option<usize>,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn new(train: &TrainConfig, model: &Model, best_epoch: Option<usize>) -> Self {
        Self {
            format: FORMAT.to_string(),
            train: train.clone(),
            model: model.config.clone(),
            best_epoch,
            params: model
                .store
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> AppResult<Model> {
        if self.format != FORMAT {
            return Err(AppError::validation(format!(
                "unsupported checkpoint format `{}`, expected `{FORMAT}`",
                self.format
            )));
        }
        let matrices = self
            .params
            .iter()
            .map(|p| {
                Matrix::from_vec(p.rows, p.cols, p.data.clone()).map_err(|e| {
                    AppError::validation(format!("checkpoint parameter `{}`: {e}", p.name))
                })
            })
            .collect::<AppResult<Vec<_>>>()?;
        let weights = self
            .params
            .iter()
            .zip(&matrices)
            .map(|(p, m)| (p.name.as_str(), m));
        Ok(Model::from_weights(self.model.clone(), weights)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.to_json()).map_err(|e| AppError::write(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::read(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            AppError::validation(format!("{}: malformed checkpoint: {e}", path.display()))
        })
    }
}
