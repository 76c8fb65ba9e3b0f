//! Numerical checks of the loss properties behind the listwise-vs-pairwise
//! generalization comparison, and leaf-routing statistics of a trained
//! tree.
//!
//! Every inequality is tested with an absolute slack of [`TOLERANCE`].

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NUM_LABELS};
use crate::error::{Error, Result};
use crate::kernel::matrix::softmax;
use crate::kernel::{Matrix, Rng};
use crate::model::Model;
use crate::objectives::{listwise_loss, pairwise_loss_at, pairwise_margin, LossKind, ScoredList};

pub const TOLERANCE: f64 = 1e-9;

/// Mixing weights used by the Jensen tests.
pub const THETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub violations: usize,
    /// Smallest observed `bound − value`; negative when violated.
    pub worst_margin: f64,
    pub pass: bool,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        Self {
            property: property.to_string(),
            trials: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            pass: true,
        }
    }

    /// Records `value ≤ bound + TOLERANCE`.
    fn record(&mut self, value: f64, bound: f64) {
        let margin = bound - value;
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        if !(margin + TOLERANCE >= 0.0) {
            self.violations += 1;
        }
    }

    fn finish(mut self, trials: usize) -> Self {
        self.trials = trials;
        self.pass = self.violations == 0;
        self
    }
}

fn random_labels(n: usize, rng: &mut Rng) -> Vec<u8> {
    (0..n).map(|_| rng.index(NUM_LABELS) as u8).collect()
}

/// Strictly positive point on the probability simplex.
fn simplex_interior(n: usize, rng: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn mix(theta: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(v)
        .map(|(a, b)| theta * a + (1.0 - theta) * b)
        .collect()
}

/// Cross-entropy `−Σ y′ ln p` as a function of the predicted
/// distribution `p`.
pub fn cross_entropy(y_prob: &[f64], p: &[f64]) -> f64 {
    -y_prob
        .iter()
        .zip(p)
        .map(|(y, q)| y * libm::log(*q))
        .sum::<f64>()
}

/// Hinge `[−f⁺ + f⁻ + α]⁺` as a function of the pair `(f⁺, f⁻)`.
pub fn hinge(pair: &[f64], alpha: f64) -> f64 {
    (-pair[0] + pair[1] + alpha).max(0.0)
}

/// Generic Jensen test: for each trial draw two points and a loss, then
/// check `L(θu + (1−θ)v) ≤ θL(u) + (1−θ)L(v)` for every θ in [`THETAS`].
pub fn jensen_check<F, L>(
    property: &str,
    trials: usize,
    rng: &mut Rng,
    mut sample: F,
) -> PropertyReport
where
    F: FnMut(&mut Rng) -> (Vec<f64>, Vec<f64>, L),
    L: Fn(&[f64]) -> f64,
{
    let mut report = PropertyReport::new(property);
    for _ in 0..trials {
        let (u, v, loss) = sample(rng);
        let (lu, lv) = (loss(&u), loss(&v));
        for theta in THETAS {
            report.record(loss(&mix(theta, &u, &v)), theta * lu + (1.0 - theta) * lv);
        }
    }
    report.finish(trials)
}

/// Convexity of the listwise loss in the predicted distribution `f′`, or
/// of the pairwise hinge in `(f⁺, f⁻)`.
pub fn check_convexity(loss: LossKind, trials: usize, rng: &mut Rng) -> PropertyReport {
    match loss {
        LossKind::Listwise => jensen_check("listwise_convexity", trials, rng, |rng| {
            let n = rng.int_inclusive(2, 30);
            let labels: Vec<f64> = random_labels(n, rng).iter().map(|&y| y as f64).collect();
            let y_prob = softmax(&labels);
            let u = simplex_interior(n, rng);
            let v = simplex_interior(n, rng);
            (u, v, move |p: &[f64]| cross_entropy(&y_prob, p))
        }),
        LossKind::Pairwise => jensen_check("pairwise_convexity", trials, rng, |rng| {
            let n = rng.int_inclusive(2, 30);
            let alpha = pairwise_margin(&random_labels(n, rng));
            let mut point = || vec![rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0)];
            let (u, v) = (point(), point());
            (u, v, move |p: &[f64]| hinge(p, alpha))
        }),
    }
}

/// Harness self-test on the concave `−‖x‖²`; a working harness reports
/// violations.
pub fn check_concave_probe(trials: usize, rng: &mut Rng) -> PropertyReport {
    jensen_check("concave_probe", trials, rng, |rng| {
        let n = rng.int_inclusive(1, 5);
        let u: Vec<f64> = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        (u, v, |x: &[f64]| -x.iter().map(|a| a * a).sum::<f64>())
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBounds {
    pub report: PropertyReport,
    /// Largest sampled listwise gradient component magnitude.
    pub gamma_list: f64,
    /// Largest sampled pairwise subgradient component magnitude.
    pub gamma_pair: f64,
}

fn random_scores(n: usize, rng: &mut Rng) -> Vec<f64> {
    // One list in ten is drawn at saturation scale.
    let scale = if rng.index(10) == 0 { 100.0 } else { 10.0 };
    (0..n).map(|_| rng.uniform_range(-scale, scale)).collect()
}

/// Per-term and per-component bounds on the listwise gradient, and the
/// `{−1, 0, +1}` range of the pairwise subgradient, on random lists.
pub fn check_gradient_bounds(trials: usize, rng: &mut Rng) -> Result<GradientBounds> {
    let mut report = PropertyReport::new("gradient_bounds");
    let mut gamma_list: f64 = 0.0;
    let mut gamma_pair: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.int_inclusive(2, 30);
        let list = ScoredList::new(random_scores(n, rng), random_labels(n, rng))?;
        let f_prob = softmax(&list.scores);
        let y_prob = softmax(&list.labels.iter().map(|&y| y as f64).collect::<Vec<_>>());
        for j in 0..n {
            // y′_j · Σ_{k≠j} e^{f_k} / Σ_t e^{f_t} = y′_j (1 − f′_j)
            let term = y_prob[j] * (1.0 - f_prob[j]);
            report.record(term.abs(), y_prob[j]);
            report.record(y_prob[j], 1.0);
        }
        for g in listwise_loss(&list).grad {
            report.record(g.abs(), 1.0);
            gamma_list = gamma_list.max(g.abs());
        }
        let pos = rng.index(n);
        let neg = rng.index(n);
        if list.labels[pos] > list.labels[neg] {
            for g in pairwise_loss_at(&list, pos, neg).grad {
                let off_grid = if g == -1.0 || g == 0.0 || g == 1.0 {
                    0.0
                } else {
                    1.0
                };
                report.record(off_grid, 0.0);
                gamma_pair = gamma_pair.max(g.abs());
            }
        }
    }
    Ok(GradientBounds {
        report: report.finish(trials),
        gamma_list,
        gamma_pair,
    })
}

/// Closed-form per-product loss bounds for a list of `n` reviews with
/// scores in a box of width `span` and label range `alpha`:
/// `(span + ln n, span + alpha)` for the listwise and pairwise losses.
pub fn loss_bounds(n: usize, span: f64, alpha: f64) -> (f64, f64) {
    (span + libm::log(n as f64), span + alpha)
}

/// Samples bounded instances (sets of products with scores in
/// `[f_min, f_max]`) and checks both total losses against their summed
/// closed-form bounds. Where `ln|R_i| ≤ y_max − y_min`, also checks that the
/// listwise bound does not exceed the pairwise one.
pub fn check_loss_bounds(
    trials: usize,
    f_min: f64,
    f_max: f64,
    rng: &mut Rng,
) -> Result<PropertyReport> {
    if !(f_min <= f_max) {
        return Err(Error::Config("score box needs f_min <= f_max".into()));
    }
    let span = f_max - f_min;
    let mut report = PropertyReport::new("loss_bounds");
    for _ in 0..trials {
        let products = rng.int_inclusive(1, 5);
        let (mut l_list, mut l_pair, mut b_list, mut b_pair) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..products {
            let n = rng.int_inclusive(1, 30);
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform_range(f_min, f_max)).collect();
            let list = ScoredList::new(scores, random_labels(n, rng))?;
            let alpha = pairwise_margin(&list.labels);
            let (bl, bp) = loss_bounds(n, span, alpha);
            l_list += listwise_loss(&list).value;
            // The largest hinge over all valid pairs.
            let mut worst: f64 = 0.0;
            for pos in 0..n {
                for neg in 0..n {
                    if list.labels[pos] > list.labels[neg] {
                        worst = worst.max(pairwise_loss_at(&list, pos, neg).value);
                    }
                }
            }
            l_pair += worst;
            b_list += bl;
            b_pair += bp;
            if libm::log(n as f64) <= alpha {
                report.record(bl, bp);
            }
        }
        report.record(l_list, b_list);
        report.record(l_pair, b_pair);
    }
    Ok(report.finish(trials))
}

/// `log₁₀ |R|` for the largest list of the source corpus and whether it
/// stays within the label range 4.
pub fn base10_list_remark(max_reviews: usize) -> (f64, bool) {
    let v = libm::log10(max_reviews as f64);
    (v, v <= 4.0)
}

/// Inputs of the stability generalization bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Lipschitz constant of the loss.
    pub gamma: f64,
    /// Upper bound of the loss.
    pub loss_bound: f64,
    /// Learning rate per iteration; its length is the iteration count `T`.
    pub lambdas: Vec<f64>,
    /// Sample count.
    pub n: usize,
    /// Failure probability, in `(0, 2]`.
    pub delta: f64,
}

impl BoundInputs {
    pub fn constant_rate(
        gamma: f64,
        loss_bound: f64,
        iterations: usize,
        lambda: f64,
        n: usize,
        delta: f64,
    ) -> Self {
        Self {
            gamma,
            loss_bound,
            lambdas: vec![lambda; iterations],
            n,
            delta,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 2.0) {
            return Err(Error::Config(alloc::format!(
                "delta must lie in (0, 2], got {}",
                self.delta
            )));
        }
        if self.lambdas.is_empty() || self.n == 0 {
            return Err(Error::Config("bound needs T >= 1 and N >= 1".into()));
        }
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !nonneg(self.gamma)
            || !nonneg(self.loss_bound)
            || !self.lambdas.iter().all(|&l| nonneg(l))
        {
            return Err(Error::Config(
                "gamma, loss bound and rates must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `L √(ln(2/δ) / 2N) + 2γ² Σλ_t (2√(ln(2/δ)/T) + √(2 ln(2/δ)/N) + 1/N)`.
pub fn generalization_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let log_term = libm::log(2.0 / inputs.delta);
    let n = inputs.n as f64;
    let t = inputs.lambdas.len() as f64;
    let first = inputs.loss_bound * libm::sqrt(log_term / (2.0 * n));
    let rate_sum: f64 = inputs.lambdas.iter().sum();
    let second = 2.0
        * inputs.gamma
        * inputs.gamma
        * rate_sum
        * (2.0 * libm::sqrt(log_term / t) + libm::sqrt(2.0 * log_term / n) + 1.0 / n);
    Ok(first + second)
}

/// Finite-difference sign check that the bound does not decrease when γ or
/// the loss bound grows, over random valid inputs.
pub fn check_bound_monotonicity(trials: usize, rng: &mut Rng) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("bound_monotonicity");
    for _ in 0..trials {
        let t = rng.int_inclusive(1, 50);
        let inputs = BoundInputs {
            gamma: rng.uniform_range(0.0, 5.0),
            loss_bound: rng.uniform_range(0.0, 20.0),
            lambdas: (0..t).map(|_| rng.uniform_range(0.0, 0.1)).collect(),
            n: rng.int_inclusive(1, 10_000),
            delta: rng.uniform_range(1e-3, 2.0),
        };
        let base = generalization_bound(&inputs)?;
        let h = rng.uniform_range(1e-3, 1.0);
        let more_gamma = generalization_bound(&BoundInputs {
            gamma: inputs.gamma + h,
            ..inputs.clone()
        })?;
        let more_loss = generalization_bound(&BoundInputs {
            loss_bound: inputs.loss_bound + h,
            ..inputs.clone()
        })?;
        report.record(base, more_gamma);
        report.record(base, more_loss);
    }
    Ok(report.finish(trials))
}

/// Mean leaf-reach probability per label class.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingStats {
    /// `5 × |ℒ|`; rows of empty classes are NaN.
    pub mean: Matrix,
    pub counts: [usize; NUM_LABELS],
}

impl RoutingStats {
    pub fn empty_classes(&self) -> Vec<usize> {
        (0..NUM_LABELS).filter(|&c| self.counts[c] == 0).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..NUM_LABELS)
            .map(|c| self.mean.row(c).iter().sum())
            .collect()
    }
}

/// Routes every review of `data` through the model's first tree and
/// averages μ per label class.
pub fn leaf_routing_stats(model: &Model, data: &Dataset) -> Result<RoutingStats> {
    let tree = model
        .regressor
        .first_tree()
        .ok_or_else(|| Error::Config("routing statistics need a tree regressor".into()))?;
    let leaves = crate::kernel::routing::leaf_count(tree.depth);
    let mut sums = Matrix::zeros(NUM_LABELS, leaves);
    let mut counts = [0usize; NUM_LABELS];
    for p in &data.products {
        let mu = model
            .routing(p)?
            .ok_or_else(|| Error::Config("routing statistics need a tree regressor".into()))?;
        for (r, review) in p.reviews.iter().enumerate() {
            let c = review.label as usize;
            counts[c] += 1;
            for (s, m) in sums.row_mut(c).iter_mut().zip(mu.row(r)) {
                *s += m;
            }
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        for s in sums.row_mut(c) {
            *s = if count == 0 {
                f64::NAN
            } else {
                *s / count as f64
            };
        }
    }
    Ok(RoutingStats { mean: sums, counts })
}

/// `½ Σ |a − b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jensen_endpoints_are_equalities() {
        let y = softmax(&[0.0, 2.0, 4.0]);
        let u = [0.2, 0.3, 0.5];
        let v = [0.6, 0.3, 0.1];
        assert_eq!(cross_entropy(&y, &mix(1.0, &u, &v)), cross_entropy(&y, &u));
        assert_eq!(cross_entropy(&y, &mix(0.0, &u, &v)), cross_entropy(&y, &v));
        assert_eq!(
            hinge(&mix(1.0, &[1.0, 2.0], &[3.0, -1.0]), 4.0),
            hinge(&[1.0, 2.0], 4.0)
        );
    }

    #[test]
    fn convexity_holds_and_probe_fails() {
        let mut rng = Rng::new(11);
        assert!(check_convexity(LossKind::Listwise, 200, &mut rng).pass);
        assert!(check_convexity(LossKind::Pairwise, 200, &mut rng).pass);
        let probe = check_concave_probe(50, &mut rng);
        assert!(!probe.pass && probe.violations > 0 && probe.worst_margin < 0.0);
    }

    #[test]
    fn uniform_distributions_have_zero_gradient() {
        let l = listwise_loss(&ScoredList::new(vec![0.5; 4], vec![2; 4]).unwrap());
        assert!(l.grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn saturated_gradient_stays_bounded() {
        let l = listwise_loss(&ScoredList::new(vec![100.0, -100.0], vec![0, 4]).unwrap());
        assert!(l.grad.iter().all(|g| g.abs() <= 1.0));
    }

    #[test]
    fn base10_remark() {
        let (v, ok) = base10_list_remark(2043);
        assert_abs_diff_eq!(v, 3.31, epsilon = 5e-3);
        assert!(ok);
    }

    #[test]
    fn bound_zero_cases() {
        let zero = BoundInputs::constant_rate(0.0, 0.0, 10, 0.1, 100, 0.05);
        assert_eq!(generalization_bound(&zero).unwrap(), 0.0);
        // δ = 2 zeroes every log term, leaving 2γ²Σλ/N.
        let at_two = BoundInputs::constant_rate(1.5, 3.0, 10, 0.1, 100, 2.0);
        assert_abs_diff_eq!(
            generalization_bound(&at_two).unwrap(),
            2.0 * 2.25 * 1.0 / 100.0,
            epsilon = 1e-15
        );
        let no_rate = BoundInputs::constant_rate(1.5, 3.0, 10, 0.0, 100, 2.0);
        assert_eq!(generalization_bound(&no_rate).unwrap(), 0.0);
        assert!(
            generalization_bound(&BoundInputs::constant_rate(1.0, 1.0, 1, 0.1, 1, 0.0)).is_err()
        );
    }

    #[test]
    fn total_variation_cases() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
