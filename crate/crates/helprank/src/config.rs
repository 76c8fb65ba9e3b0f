//! Flat JSON run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use helprank_core::data::{GenConfig, NUM_LABELS};
use helprank_core::kernel::Pooling;
use helprank_core::objectives::{Gain, LossKind, MetricConfig};
use helprank_core::regressor::RegressorSpec;
use helprank_core::trainer::{AdamConfig, Schedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Tree,
    Fcnn,
}

/// Every option of generation, splitting, training and evaluation. Absent
/// keys take their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    /// Seeds generation, the split and training.
    pub seed: u64,

    pub n_products: usize,
    pub reviews_min: usize,
    pub reviews_max: usize,
    pub product_tokens_min: usize,
    pub product_tokens_max: usize,
    pub review_tokens_min: usize,
    pub review_tokens_max: usize,
    pub regions: usize,
    pub d_tok: usize,
    pub d_img: usize,
    pub noise_level: f64,
    pub topic_sharing: f64,
    pub label_distribution: [f64; NUM_LABELS],
    /// Train, val and test fractions.
    pub split: [f64; 3],

    pub loss: LossKind,
    pub regressor: RegressorKind,
    pub tree_depth: usize,
    pub tree_count: usize,
    pub fcnn_hidden: Vec<usize>,
    pub listwise_attention: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub conv_kernel: usize,
    pub pooling: Pooling,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,

    /// MAP relevance threshold.
    pub tau: u8,
    pub gain: Gain,

    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let g = GenConfig::default();
        let t = TrainConfig::default();
        let (tree_depth, tree_count) = match t.regressor {
            RegressorSpec::Tree { depth, trees } => (depth, trees),
            RegressorSpec::Fcnn { .. } => (3, 1),
        };
        Self {
            seed: g.seed,
            n_products: g.n_products,
            reviews_min: g.reviews_min,
            reviews_max: g.reviews_max,
            product_tokens_min: g.product_tokens_min,
            product_tokens_max: g.product_tokens_max,
            review_tokens_min: g.review_tokens_min,
            review_tokens_max: g.review_tokens_max,
            regions: g.regions,
            d_tok: g.d_tok,
            d_img: g.d_img,
            noise_level: g.noise_level,
            topic_sharing: g.topic_sharing,
            label_distribution: g.label_distribution,
            split: [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            loss: t.loss,
            regressor: RegressorKind::Tree,
            tree_depth,
            tree_count,
            fcnn_hidden: vec![8, 4, 2],
            listwise_attention: t.listwise_attention,
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            hidden: t.hidden,
            conv_kernel: t.conv_kernel,
            pooling: t.pooling,
            adam_beta1: t.adam.beta1,
            adam_beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            tau: t.metrics.tau,
            gain: t.metrics.gain,
            out_dir: None,
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str, source: &str) -> AppResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| AppError::validation(format!("{source}: invalid config: {e}")))
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> AppResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| AppError::read(p, e))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            n_products: self.n_products,
            reviews_min: self.reviews_min,
            reviews_max: self.reviews_max,
            product_tokens_min: self.product_tokens_min,
            product_tokens_max: self.product_tokens_max,
            review_tokens_min: self.review_tokens_min,
            review_tokens_max: self.review_tokens_max,
            regions: self.regions,
            d_tok: self.d_tok,
            d_img: self.d_img,
            noise_level: self.noise_level,
            topic_sharing: self.topic_sharing,
            label_distribution: self.label_distribution,
            seed: self.seed,
        }
    }

    pub fn regressor_spec(&self) -> RegressorSpec {
        match self.regressor {
            RegressorKind::Tree => RegressorSpec::Tree {
                depth: self.tree_depth,
                trees: self.tree_count,
            },
            RegressorKind::Fcnn => RegressorSpec::Fcnn {
                hidden: self.fcnn_hidden.clone(),
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            regressor: self.regressor_spec(),
            listwise_attention: self.listwise_attention,
            lr: self.lr,
            schedule: Schedule::Constant,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            hidden: self.hidden,
            conv_kernel: self.conv_kernel,
            pooling: self.pooling,
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            metrics: self.metric_config(),
        }
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            tau: self.tau,
            gain: self.gain,
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.gen_config().validate()?;
        self.train_config().validate()?;
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|r| r.is_nan() || *r < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(AppError::validation(format!(
                "split fractions must be non-negative and sum to 1, got {:?}",
                self.split
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_match_core() {
        let c = RunConfigFile::default();
        assert_eq!(RunConfigFile::parse(&c.to_json(), "mem").unwrap(), c);
        assert_eq!(
            c.train_config(),
            TrainConfig {
                seed: c.seed,
                ..TrainConfig::default()
            }
        );
        assert_eq!(c.gen_config(), GenConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            RunConfigFile::parse(r#"{"epochs": 3, "learning_rate": 0.1}"#, "cfg.json").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn absent_keys_take_defaults() {
        let c = RunConfigFile::parse(r#"{"epochs": 3, "loss": "pairwise"}"#, "mem").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.loss, LossKind::Pairwise);
        assert_eq!(c.hidden, RunConfigFile::default().hidden);
    }
}
