use alloc::vec::Vec;

use super::EpochReport;
use crate::error::{Error, Result};

/// Maps `xs` onto `[0, 1]` by its own min and max. A constant sequence
/// maps to zeros.
pub fn min_max_normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return alloc::vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / span).collect()
}

/// `Ê_t = norm(R_val)_t − norm(R_train)_t`, each series normalized
/// independently over the run. Values lie in `[−1, 1]`.
pub fn generalization_curve(reports: &[EpochReport]) -> Result<Vec<f64>> {
    if reports.len() < 2 {
        return Err(Error::Config(
            "generalization curve needs at least two epochs".into(),
        ));
    }
    let train: Vec<f64> = reports.iter().map(|r| r.r_train).collect();
    let val: Vec<f64> = reports.iter().map(|r| r.r_val).collect();
    Ok(min_max_normalize(&val)
        .into_iter()
        .zip(min_max_normalize(&train))
        .map(|(v, t)| v - t)
        .collect())
}

/// `|MAP_train − MAP_test|`.
pub fn delta_map(map_train: f64, map_test: f64) -> f64 {
    (map_train - map_test).abs()
}
