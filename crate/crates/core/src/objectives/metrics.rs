//! MAP, NDCG@N and score separation.
//!
//! Rankings sort by descending score; equal scores keep their original
//! review order.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NDCG gain variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^y − 1`
    #[default]
    Exponential,
    /// `y`
    Linear,
}

impl Gain {
    fn apply(self, label: u8) -> f64 {
        match self {
            Gain::Exponential => libm::exp2(label as f64) - 1.0,
            Gain::Linear => label as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// A review is relevant for MAP when `label ≥ tau`.
    pub tau: u8,
    pub gain: Gain,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            gain: Gain::Exponential,
        }
    }
}

/// Review indices from best to worst score.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Mean of precision@k over the relevant positions `k` of an already
/// ranked relevance sequence. `None` when nothing is relevant.
pub fn average_precision(ranked_relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

fn dcg(labels: &[u8], n: usize, gain: Gain) -> f64 {
    labels
        .iter()
        .take(n)
        .enumerate()
        .map(|(k, &y)| gain.apply(y) / libm::log2((k + 2) as f64))
        .sum()
}

/// NDCG@N of labels already in predicted order. Defined as 1 when the
/// ideal DCG is zero.
pub fn ndcg_at(ranked_labels: &[u8], n: usize, gain: Gain) -> f64 {
    let mut ideal = ranked_labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, n, gain);
    if idcg == 0.0 {
        return 1.0;
    }
    dcg(ranked_labels, n, gain) / idcg
}

/// Probability that a random (helpful, unhelpful) pair is ordered
/// correctly by score, ties counting one half. Helpful means `label ≥ tau`.
pub fn score_separation(scores: &[f64], labels: &[u8], tau: u8) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y >= tau)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y < tau)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub map: f64,
    pub ndcg3: f64,
    pub ndcg5: f64,
}

/// Aggregates metrics over `(scores, labels)` lists. Products without a
/// relevant review are left out of MAP; MAP is 0 if no product qualifies.
pub fn evaluate_lists<'a>(
    lists: impl IntoIterator<Item = (&'a [f64], &'a [u8])>,
    cfg: MetricConfig,
) -> RankingMetrics {
    let mut ap_sum = 0.0;
    let mut ap_n = 0usize;
    let mut n3 = 0.0;
    let mut n5 = 0.0;
    let mut count = 0usize;
    for (scores, labels) in lists {
        let order = rank_order(scores);
        let ranked: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        let rel: Vec<bool> = ranked.iter().map(|&y| y >= cfg.tau).collect();
        if let Some(ap) = average_precision(&rel) {
            ap_sum += ap;
            ap_n += 1;
        }
        n3 += ndcg_at(&ranked, 3, cfg.gain);
        n5 += ndcg_at(&ranked, 5, cfg.gain);
        count += 1;
    }
    let per = |x: f64| if count == 0 { 0.0 } else { x / count as f64 };
    RankingMetrics {
        map: if ap_n == 0 { 0.0 } else { ap_sum / ap_n as f64 },
        ndcg3: per(n3),
        ndcg5: per(n5),
    }
}
