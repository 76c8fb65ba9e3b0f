//! Parameterized building blocks recorded on a [`Tape`].

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::Rng;
use super::tape::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Weight matrix drawn from uniform(−1/√fan_in, 1/√fan_in).
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Matrix {
    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

/// Affine map `x W + b` applied row by row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(d_in, d_out, d_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, d_out));
        Self { weight, bias }
    }

    pub fn dims(&self, store: &ParamStore) -> (usize, usize) {
        store.get(self.weight).value.shape()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

/// Single-head scaled dot-product self-attention with learned Q/K/V
/// projections. No residual path, no normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub dim: usize,
}

/// Output rows and the attention matrix that produced them.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    pub output: Var,
    pub weights: Var,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), d_in, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), d_in, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), d_in, dim, rng),
            dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Attended> {
        let q = self.query.forward(tape, store, x)?;
        let k = self.key.forward(tape, store, x)?;
        let v = self.value.forward(tape, store, x)?;
        let scores = tape.matmul_t(q, k)?;
        let scaled = tape.scale(scores, 1.0 / libm::sqrt(self.dim as f64));
        let weights = tape.softmax_rows(scaled);
        let output = tape.matmul(weights, v)?;
        Ok(Attended { output, weights })
    }
}

pub fn self_attention(
    tape: &mut Tape,
    store: &ParamStore,
    attn: &SelfAttention,
    x: Var,
) -> Result<Var> {
    Ok(attn.forward(tape, store, x)?.output)
}

/// Same-length 1-D convolution over the row axis with zero padding of
/// `(kernel − 1) / 2` on each side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1d {
    /// `(kernel · d_in) × d_out`, window rows ordered oldest first.
    pub filters: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "conv1d kernel must be odd, got {kernel}"
            )));
        }
        let fan_in = kernel * d_in;
        let filters = store.add(
            format!("{name}.filters"),
            init_uniform(fan_in, d_out, fan_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, d_out));
        Ok(Self {
            filters,
            bias,
            kernel,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let cols = tape.im2col(x, self.kernel)?;
        let f = tape.param(store, self.filters);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(cols, f)?;
        tape.add_bias(y, b)
    }
}

pub fn conv1d(tape: &mut Tape, store: &ParamStore, conv: &Conv1d, x: Var) -> Result<Var> {
    conv.forward(tape, store, x)
}

/// Row-pooling variant used to condense sequences into vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

pub fn pool(tape: &mut Tape, x: Var, pooling: Pooling) -> Result<Var> {
    match pooling {
        Pooling::Mean => tape.mean_rows(x),
        Pooling::Max => tape.max_rows(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_attention_returns_value_projection() {
        let mut rng = Rng::new(3);
        let mut store = ParamStore::new();
        let attn = SelfAttention::new(&mut store, "a", 4, 3, &mut rng);
        let x = Matrix::from_rows(&[[0.2, -0.5, 1.0, 0.3]]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let out = attn.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(out.weights).get(0, 0), 1.0);
        let expected = x
            .matmul(&store.get(attn.value.weight).value)
            .unwrap()
            .add_row_bias(&store.get(attn.value.bias).value)
            .unwrap();
        assert_eq!(tape.value(out.output), &expected);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = Rng::new(5);
        let mut store = ParamStore::new();
        let attn = SelfAttention::new(&mut store, "a", 6, 4, &mut rng);
        let x = init_uniform(7, 6, 1, &mut rng).scale(3.0);
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let out = attn.forward(&mut tape, &store, xv).unwrap();
        let w = tape.value(out.weights);
        assert_eq!(w.shape(), (7, 7));
        for r in 0..7 {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(tape.value(out.output).shape(), (7, 4));
    }

    #[test]
    fn kernel_one_identity_conv_is_projection() {
        let mut rng = Rng::new(9);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 3, 3, 1, &mut rng).unwrap();
        store.get_mut(conv.filters).value = Matrix::identity(3);
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let y = conv.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn zero_input_conv_is_zero() {
        let mut rng = Rng::new(9);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 4, 5, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(Matrix::zeros(6, 4));
        let y = conv.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(y), &Matrix::zeros(6, 5));
        assert!(Conv1d::new(&mut store, "even", 4, 5, 2, &mut rng).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = Rng::new(1);
        let m = init_uniform(16, 8, 16, &mut rng);
        assert!(m.data().iter().all(|v| v.abs() <= 0.25));
    }
}
