//! CSV tables written by the driver. Reals carry 10 significant digits.

use std::path::Path;

use helprank_core::data::NUM_LABELS;
use helprank_core::theoria::{PropertyReport, RoutingStats};
use helprank_core::trainer::{AblationRow, EpochReport, Evaluation, RunArtifacts};

use crate::error::{AppError, AppResult};

/// Scientific notation with 10 significant digits.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.9e}")
    }
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> AppResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| AppError::write(path, e))?;
    w.write_record(header)
        .map_err(|e| AppError::write(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| AppError::write(path, e))?;
    }
    w.flush().map_err(|e| AppError::write(path, e))
}

pub fn write_epochs(path: &Path, reports: &[EpochReport]) -> AppResult<()> {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                real(r.r_train),
                real(r.r_val),
                real(r.e_hat),
                real(r.map),
                real(r.ndcg3),
                real(r.ndcg5),
            ]
        })
        .collect();
    write_table(
        path,
        &[
            "epoch", "R_train", "R_val", "E_hat", "MAP", "NDCG3", "NDCG5",
        ],
        rows,
    )
}

fn eval_row(split: &str, e: &Evaluation) -> Vec<String> {
    vec![
        split.to_string(),
        real(e.loss),
        real(e.metrics.map),
        real(e.metrics.ndcg3),
        real(e.metrics.ndcg5),
    ]
}

pub fn write_evaluations(path: &Path, rows: &[(&str, Evaluation)]) -> AppResult<()> {
    let rows = rows.iter().map(|(s, e)| eval_row(s, e)).collect();
    write_table(path, &["split", "loss", "MAP", "NDCG3", "NDCG5"], rows)
}

pub fn write_run_metrics(path: &Path, run: &RunArtifacts) -> AppResult<()> {
    write_evaluations(
        path,
        &[("train", run.train), ("val", run.val), ("test", run.test)],
    )
}

pub fn write_summary(path: &Path, seed: u64, run: &RunArtifacts) -> AppResult<()> {
    let best = run
        .best_epoch
        .map_or_else(|| "none".to_string(), |e| e.to_string());
    write_table(
        path,
        &["key", "value"],
        vec![
            vec!["seed".into(), seed.to_string()],
            vec!["best_epoch".into(), best],
            vec!["delta_MAP".into(), real(run.delta_map)],
        ],
    )
}

pub fn write_properties(path: &Path, reports: &[PropertyReport]) -> AppResult<()> {
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.property.clone(),
                r.trials.to_string(),
                r.violations.to_string(),
                real(r.worst_margin),
                r.pass.to_string(),
            ]
        })
        .collect();
    write_table(
        path,
        &["property", "trials", "violations", "worst_margin", "pass"],
        rows,
    )
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> AppResult<()> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.regressor.short_name(),
                format!("{:?}", r.loss).to_lowercase(),
                r.listwise_attention.to_string(),
                real(r.val_map),
                real(r.test.map),
                real(r.test.ndcg3),
                real(r.test.ndcg5),
            ]
        })
        .collect();
    write_table(
        path,
        &[
            "regressor",
            "loss",
            "listwise_attention",
            "val_MAP",
            "MAP",
            "NDCG3",
            "NDCG5",
        ],
        rows,
    )
}

pub fn write_routing(path: &Path, stats: &RoutingStats) -> AppResult<()> {
    let leaves = stats.mean.cols();
    let mut header = vec!["label".to_string(), "count".to_string()];
    header.extend((0..leaves).map(|l| format!("leaf{l}")));
    let rows = (0..NUM_LABELS)
        .map(|c| {
            let mut row = vec![c.to_string(), stats.counts[c].to_string()];
            row.extend(stats.mean.row(c).iter().map(|&m| real(m)));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, rows)
}
