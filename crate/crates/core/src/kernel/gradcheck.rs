//! Central finite-difference validation of tape gradients.
//!
//! The recorded output is contracted with a fixed pseudo-random weight
//! matrix so that every output entry contributes to the checked scalar.
//! Errors are reported as `|analytic − numeric| / max(1, |analytic|, |numeric|)`.

use alloc::vec::Vec;

use super::matrix::Matrix;
use super::rng::Rng;
use super::tape::{ParamStore, Tape, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tol: f64,
    /// Upper bound on probed coordinates per tensor; larger tensors are
    /// probed at an even stride.
    pub max_coords_per_tensor: Option<usize>,
}

impl GradCheckConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            step: DEFAULT_STEP,
            tol,
            max_coords_per_tensor: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn new(tol: f64) -> Self {
        Self {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            coords_checked: 0,
            tol,
            passed: true,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / 1.0f64.max(analytic.abs()).max(numeric.abs());
        self.max_abs_error = self.max_abs_error.max(abs);
        self.max_rel_error = self.max_rel_error.max(rel);
        self.coords_checked += 1;
        self.passed = self.max_rel_error < self.tol;
    }
}

fn projection(shape: (usize, usize)) -> Matrix {
    let mut rng = Rng::new(0x9e37_79b9);
    let data = (0..shape.0 * shape.1)
        .map(|_| {
            let m = rng.uniform_range(0.5, 1.5);
            if rng.uniform() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Matrix::from_vec(shape.0, shape.1, data).expect("length matches by construction")
}

fn contract(out: &Matrix, proj: &Matrix) -> f64 {
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

fn probe_indices(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(cap) if cap > 0 && len > cap => {
            let stride = len.div_ceil(cap);
            (0..len).step_by(stride).collect()
        }
        _ => (0..len).collect(),
    }
}

/// Checks the gradient of `build` with respect to each of `inputs`.
pub fn finite_difference_check<F>(inputs: &[Matrix], build: F, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_inputs(inputs, build, GradCheckConfig::with_tol(tol))
}

pub fn check_inputs<F>(inputs: &[Matrix], build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Matrix]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.input(x.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    let proj = projection(tape.value(out).shape());
    let grads = tape.backward(out, proj.clone())?;

    let mut report = GradCheckReport::new(cfg.tol);
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let zero = Matrix::zeros(inputs[i].rows(), inputs[i].cols());
        let analytic = grads.wrt(*var).unwrap_or(&zero).clone();
        for k in probe_indices(inputs[i].len(), cfg.max_coords_per_tensor) {
            let x0 = inputs[i].data()[k];
            work[i].data_mut()[k] = x0 + cfg.step;
            let (t, _, o) = eval(&work)?;
            let plus = contract(t.value(o), &proj);
            work[i].data_mut()[k] = x0 - cfg.step;
            let (t, _, o) = eval(&work)?;
            let minus = contract(t.value(o), &proj);
            work[i].data_mut()[k] = x0;
            report.record(analytic.data()[k], (plus - minus) / (2.0 * cfg.step));
        }
    }
    Ok(report)
}

/// Checks the gradient of `build` with respect to every parameter in
/// `store`. Values are restored before returning.
pub fn check_params<F>(
    store: &mut ParamStore,
    build: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(&mut tape, store)?;
    let proj = projection(tape.value(out).shape());
    let grads = tape.backward(out, proj.clone())?;
    store.zero_grad();
    grads.accumulate(&tape, store)?;
    let analytic: Vec<Matrix> = store.iter().map(|p| p.grad.clone()).collect();
    store.zero_grad();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = build(&mut tape, store)?;
        Ok(contract(tape.value(out), &proj))
    };

    let mut report = GradCheckReport::new(cfg.tol);
    let ids: Vec<_> = (0..store.len()).map(super::tape::ParamId).collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let len = store.get(id).value.len();
        for k in probe_indices(len, cfg.max_coords_per_tensor) {
            let x0 = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = x0 + cfg.step;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[k] = x0 - cfg.step;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[k] = x0;
            report.record(analytic[pi].data()[k], (plus? - minus?) / (2.0 * cfg.step));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_op_error_is_tiny() {
        let a = Matrix::from_rows(&[[0.3, -1.2], [0.7, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.5], [-0.25]]).unwrap();
        let report = finite_difference_check(&[a, b], |t, v| t.matmul(v[0], v[1]), 1e-6).unwrap();
        assert!(report.passed);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coords_checked, 6);
    }

    #[test]
    fn harness_detects_a_wrong_gradient() {
        // The second summand copies the input as a constant, so the forward
        // value is 2x while the recorded gradient only sees x.
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let report = finite_difference_check(
            &[x],
            |t, v| {
                let detached = t.input(t.value(v[0]).clone());
                t.add(v[0], detached)
            },
            1e-6,
        )
        .unwrap();
        assert!(!report.passed, "{report:?}");
    }
}
