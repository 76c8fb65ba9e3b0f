//! Adam training loop, per-epoch reports, the normalized generalization
//! gap and the ablation grid.

mod adam;
mod curve;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig, Schedule};
pub use curve::{delta_map, generalization_curve, min_max_normalize};

use crate::data::{Dataset, ProductRecord};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::kernel::{Matrix, Pooling, Rng, Tape};
use crate::model::{Model, ModelConfig};
use crate::objectives::{
    evaluate_lists, listwise_loss, pairwise_expected_loss, pairwise_sampled_loss, LossKind,
    MetricConfig, RankingMetrics, ScoredList,
};
use crate::regressor::RegressorSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub regressor: RegressorSpec,
    pub listwise_attention: bool,
    pub lr: f64,
    pub schedule: Schedule,
    /// Products per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden width `d`.
    pub hidden: usize,
    pub conv_kernel: usize,
    pub pooling: Pooling,
    pub adam: AdamConfig,
    pub metrics: MetricConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Listwise,
            regressor: RegressorSpec::default(),
            listwise_attention: true,
            lr: 1e-3,
            schedule: Schedule::Constant,
            batch_size: 32,
            epochs: 12,
            seed: 7,
            hidden: 16,
            conv_kernel: 3,
            pooling: Pooling::Mean,
            adam: AdamConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Zero epochs is accepted and yields the initialized model.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "conv_kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Config(
                "adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
            ));
        }
        match &self.regressor {
            RegressorSpec::Tree { depth, trees } => {
                if *depth < 2 || *trees == 0 {
                    return Err(Error::Config(
                        "tree regressor needs depth >= 2 and trees >= 1".into(),
                    ));
                }
            }
            RegressorSpec::Fcnn { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::Config("fcnn widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn model_config(&self, d_tok: usize, d_img: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                d_tok,
                d_img,
                hidden: self.hidden,
                conv_kernel: self.conv_kernel,
                pooling: self.pooling,
                listwise_attention: self.listwise_attention,
            },
            regressor: self.regressor.clone(),
            init_seed: Rng::new(self.seed).split(0).seed(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub r_train: f64,
    pub r_val: f64,
    /// Normalized gap, filled in once the run is complete.
    pub e_hat: f64,
    pub map: f64,
    pub ndcg3: f64,
    pub ndcg5: f64,
}

/// Mean loss and ranking metrics of a model on one split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: RankingMetrics,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    /// Checkpoint with the best validation MAP.
    pub model: Model,
    pub reports: Vec<EpochReport>,
    pub best_epoch: Option<usize>,
    pub train: Evaluation,
    pub val: Evaluation,
    pub test: Evaluation,
    pub delta_map: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Splits<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
}

impl<'a> Splits<'a> {
    fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Empty("train split"));
        }
        for d in [self.train, self.val, self.test] {
            d.validate()?;
            if d.d_tok != self.train.d_tok || d.d_img != self.train.d_img {
                return Err(Error::Schema(format!(
                    "split widths d_tok={} d_img={} differ from train d_tok={} d_img={}",
                    d.d_tok, d.d_img, self.train.d_tok, self.train.d_img
                )));
            }
        }
        Ok(())
    }
}

fn product_loss(loss: LossKind, list: &ScoredList) -> Option<f64> {
    match loss {
        LossKind::Listwise => Some(listwise_loss(list).value),
        LossKind::Pairwise => pairwise_expected_loss(list).ok().map(|l| l.value),
    }
}

/// Mean evaluation loss (the expected hinge for the pairwise loss) and
/// ranking metrics over a dataset.
pub fn evaluate(
    model: &Model,
    data: &Dataset,
    loss: LossKind,
    metrics: MetricConfig,
) -> Result<Evaluation> {
    let mut lists = Vec::with_capacity(data.len());
    let mut total = 0.0;
    let mut counted = 0usize;
    for p in &data.products {
        let list = ScoredList::new(model.scores(p)?, p.labels())?;
        if let Some(l) = product_loss(loss, &list) {
            total += l;
            counted += 1;
        }
        lists.push(list);
    }
    let metrics = evaluate_lists(
        lists.iter().map(|l| (&l.scores[..], &l.labels[..])),
        metrics,
    );
    Ok(Evaluation {
        loss: if counted == 0 {
            0.0
        } else {
            total / counted as f64
        },
        metrics,
    })
}

fn has_pair(p: &ProductRecord) -> bool {
    let first = p.reviews[0].label;
    p.reviews.iter().any(|r| r.label != first)
}

/// Runs the forward pass and loss for one product and accumulates its
/// gradient. Returns `None` for products the loss skips.
fn accumulate_product(
    model: &mut Model,
    p: &ProductRecord,
    loss: LossKind,
    pair_rng: &mut Rng,
) -> Result<Option<f64>> {
    if loss == LossKind::Pairwise && !has_pair(p) {
        return Ok(None);
    }
    let mut tape = Tape::new();
    let out = model.scores_tape(&mut tape, p)?;
    let list = ScoredList::new(tape.value(out).data().to_vec(), p.labels())?;
    let lv = match loss {
        LossKind::Listwise => listwise_loss(&list),
        LossKind::Pairwise => pairwise_sampled_loss(&list, list.len(), pair_rng)?,
    };
    let seed = Matrix::from_vec(lv.grad.len(), 1, lv.grad)?;
    tape.backward(out, seed)?
        .accumulate(&tape, &mut model.store)?;
    Ok(Some(lv.value))
}

/// Trains a fresh model on `splits.train` and evaluates every epoch on
/// `splits.val`.
pub fn train(splits: Splits<'_>, config: &TrainConfig) -> Result<RunArtifacts> {
    config.validate()?;
    splits.validate()?;
    let mut model = Model::new(config.model_config(splits.train.d_tok, splits.train.d_img))?;
    let root = Rng::new(config.seed);
    let mut order_rng = root.split(1);
    let mut pair_rng = root.split(2);
    let mut adam = Adam::new(&model.store, config.adam);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut reports = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            model.store.zero_grad();
            let mut used = 0usize;
            for &i in chunk {
                let value = accumulate_product(
                    &mut model,
                    &splits.train.products[i],
                    config.loss,
                    &mut pair_rng,
                )?;
                match value {
                    Some(v) if !v.is_finite() => return Err(Error::Diverged { epoch, batch }),
                    Some(_) => used += 1,
                    None => {}
                }
            }
            if used == 0 {
                continue;
            }
            let inv = 1.0 / used as f64;
            for p in model.store.iter_mut() {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= inv);
            }
            let lr = config.lr * config.schedule.factor(adam.steps());
            adam.step(&mut model.store, lr);
            if model.store.iter().any(|p| !p.value.is_finite()) {
                return Err(Error::Diverged { epoch, batch });
            }
        }
        let tr = evaluate(&model, splits.train, config.loss, config.metrics)?;
        let va = evaluate(&model, splits.val, config.loss, config.metrics)?;
        reports.push(EpochReport {
            epoch,
            r_train: tr.loss,
            r_val: va.loss,
            e_hat: 0.0,
            map: va.metrics.map,
            ndcg3: va.metrics.ndcg3,
            ndcg5: va.metrics.ndcg5,
        });
        let better = match &best {
            None => true,
            Some((m, _, _)) => va.metrics.map > *m,
        };
        if better {
            best = Some((va.metrics.map, epoch, model.clone()));
        }
    }

    if reports.len() >= 2 {
        let curve = generalization_curve(&reports)?;
        for (r, e) in reports.iter_mut().zip(curve) {
            r.e_hat = e;
        }
    }
    let (best_epoch, model) = match best {
        Some((_, e, m)) => (Some(e), m),
        None => (None, model),
    };
    let train = evaluate(&model, splits.train, config.loss, config.metrics)?;
    let val = evaluate(&model, splits.val, config.loss, config.metrics)?;
    let test = evaluate(&model, splits.test, config.loss, config.metrics)?;
    Ok(RunArtifacts {
        delta_map: delta_map(train.metrics.map, test.metrics.map),
        model,
        reports,
        best_epoch,
        train,
        val,
        test,
    })
}

/// Fully connected heads of the ablation grid, as hidden widths.
pub fn ablation_fcnn_heads() -> [Vec<usize>; 3] {
    [vec![8, 4, 2], vec![32, 16, 8, 4, 2], vec![32, 32, 32, 32]]
}

/// The sixteen ablation variants of `base`: regressor (base tree or one
/// of three fully connected heads) × loss × listwise attention, all
/// sharing `base.seed`.
pub fn ablation_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let base_tree = match &base.regressor {
        spec @ RegressorSpec::Tree { .. } => spec.clone(),
        RegressorSpec::Fcnn { .. } => RegressorSpec::default(),
    };
    let mut heads = vec![base_tree];
    heads.extend(
        ablation_fcnn_heads()
            .into_iter()
            .map(|hidden| RegressorSpec::Fcnn { hidden }),
    );
    let mut grid = Vec::with_capacity(16);
    for head in &heads {
        for loss in [LossKind::Listwise, LossKind::Pairwise] {
            for lan in [true, false] {
                grid.push(TrainConfig {
                    regressor: head.clone(),
                    loss,
                    listwise_attention: lan,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub regressor: RegressorSpec,
    pub loss: LossKind,
    pub listwise_attention: bool,
    pub val_map: f64,
    pub test: RankingMetrics,
}

impl AblationRow {
    pub fn from_run(config: &TrainConfig, run: &RunArtifacts) -> Self {
        Self {
            regressor: config.regressor.clone(),
            loss: config.loss,
            listwise_attention: config.listwise_attention,
            val_map: run.val.metrics.map,
            test: run.test.metrics,
        }
    }
}

/// Runs every variant of [`ablation_grid`] in order.
pub fn ablate(splits: Splits<'_>, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    ablation_grid(base)
        .iter()
        .map(|cfg| train(splits, cfg).map(|run| AblationRow::from_run(cfg, &run)))
        .collect()
}
