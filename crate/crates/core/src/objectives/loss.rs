//! Listwise softmax cross-entropy and pairwise hinge losses over one
//! product's review list.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::matrix::softmax;
use crate::kernel::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Listwise,
    Pairwise,
}

/// Predicted scores and integer labels for one review list.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredList {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredList {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scored list"));
        }
        if scores.len() != labels.len() {
            return Err(Error::Shape {
                op: "scored list",
                left: (scores.len(), 1),
                right: (labels.len(), 1),
            });
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Loss value and its gradient with respect to each score.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn label_values(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&y| y as f64).collect()
}

/// `(softmax(f), softmax(y))`.
pub fn to_distributions(list: &ScoredList) -> (Vec<f64>, Vec<f64>) {
    (softmax(&list.scores), softmax(&label_values(&list.labels)))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// `−Σ_j y′_j ln f′_j` with gradient `f′ − y′`.
pub fn listwise_loss(list: &ScoredList) -> LossValue {
    let (f_prob, y_prob) = to_distributions(list);
    let lse = log_sum_exp(&list.scores);
    let value = -list
        .scores
        .iter()
        .zip(&y_prob)
        .map(|(f, y)| y * (f - lse))
        .sum::<f64>();
    let grad = f_prob.iter().zip(&y_prob).map(|(f, y)| f - y).collect();
    LossValue {
        value: value.max(0.0),
        grad,
    }
}

/// Label range `max y − min y`, used as the hinge margin.
pub fn pairwise_margin(labels: &[u8]) -> f64 {
    let max = labels.iter().copied().max().unwrap_or(0);
    let min = labels.iter().copied().min().unwrap_or(0);
    (max - min) as f64
}

fn preference_pairs(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, yi) in labels.iter().enumerate() {
        for (j, yj) in labels.iter().enumerate() {
            if yi > yj {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Hinge `[−f⁺ + f⁻ + α]⁺` on the pair (`pos`, `neg`). The subgradient is
/// −1 on `pos` and +1 on `neg` while the hinge is strictly active and 0
/// otherwise, including at the kink.
pub fn pairwise_loss_at(list: &ScoredList, pos: usize, neg: usize) -> LossValue {
    let alpha = pairwise_margin(&list.labels);
    let margin = -list.scores[pos] + list.scores[neg] + alpha;
    let mut grad = vec![0.0; list.len()];
    if margin > 0.0 {
        grad[pos] -= 1.0;
        grad[neg] += 1.0;
    }
    LossValue {
        value: margin.max(0.0),
        grad,
    }
}

/// Hinge on one pair drawn uniformly from `{(i, j) : y_i > y_j}`.
pub fn pairwise_loss(list: &ScoredList, rng: &mut Rng) -> Result<LossValue> {
    let pairs = preference_pairs(&list.labels);
    if pairs.is_empty() {
        return Err(Error::NoPair);
    }
    let (pos, neg) = pairs[rng.index(pairs.len())];
    Ok(pairwise_loss_at(list, pos, neg))
}

/// Mean hinge over `n_pairs` independently drawn pairs.
pub fn pairwise_sampled_loss(
    list: &ScoredList,
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<LossValue> {
    let pairs = preference_pairs(&list.labels);
    if pairs.is_empty() {
        return Err(Error::NoPair);
    }
    let n = n_pairs.max(1);
    let mut total = LossValue {
        value: 0.0,
        grad: vec![0.0; list.len()],
    };
    for _ in 0..n {
        let (pos, neg) = pairs[rng.index(pairs.len())];
        let l = pairwise_loss_at(list, pos, neg);
        total.value += l.value;
        total
            .grad
            .iter_mut()
            .zip(&l.grad)
            .for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / n as f64;
    total.value *= inv;
    total.grad.iter_mut().for_each(|g| *g *= inv);
    Ok(total)
}

/// Expected hinge under uniform pair sampling: the mean over every valid
/// pair.
pub fn pairwise_expected_loss(list: &ScoredList) -> Result<LossValue> {
    let pairs = preference_pairs(&list.labels);
    if pairs.is_empty() {
        return Err(Error::NoPair);
    }
    let mut total = LossValue {
        value: 0.0,
        grad: vec![0.0; list.len()],
    };
    for &(pos, neg) in &pairs {
        let l = pairwise_loss_at(list, pos, neg);
        total.value += l.value;
        total
            .grad
            .iter_mut()
            .zip(&l.grad)
            .for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / pairs.len() as f64;
    total.value *= inv;
    total.grad.iter_mut().for_each(|g| *g *= inv);
    Ok(total)
}
