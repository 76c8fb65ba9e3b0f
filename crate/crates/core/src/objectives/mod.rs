//! Ranking objectives and evaluation metrics.

pub mod loss;
pub mod metrics;

pub use loss::{
    listwise_loss, pairwise_expected_loss, pairwise_loss, pairwise_loss_at, pairwise_margin,
    pairwise_sampled_loss, to_distributions, LossKind, LossValue, ScoredList,
};
pub use metrics::{
    average_precision, evaluate_lists, ndcg_at, rank_order, score_separation, Gain, MetricConfig,
    RankingMetrics,
};
