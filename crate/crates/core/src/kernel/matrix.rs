//! Dense row-major `f64` matrices and the forward kernels used by the model.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of 64-bit reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Inputs beyond this magnitude are clamped before the logistic so the
/// output stays strictly inside (0, 1) in `f64`.
const SIGMOID_CLAMP: f64 = 36.0;

pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (i, r.len()),
                    right: (0, cols),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self × other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            &self.data,
            self.rows,
            self.cols,
            &other.data,
            other.cols,
            &mut out.data,
        );
        Ok(out)
    }

    /// `self × otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ × other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds the `1 × cols` row `bias` to every row.
    pub fn add_row_bias(&self, bias: &Matrix) -> Result<Matrix> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape {
                op: "add_row_bias",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sigmoid(&self) -> Matrix {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Matrix {
        self.map(libm::tanh)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        out
    }

    /// Horizontal concatenation: rows must agree.
    pub fn concat_cols(&self, other: &Matrix) -> Result<Matrix> {
        concat_cols(&[self, other])
    }

    /// Vertical concatenation: columns must agree.
    pub fn concat_rows(&self, other: &Matrix) -> Result<Matrix> {
        concat_rows(&[self, other])
    }

    /// Column-wise arithmetic mean, `1 × cols`.
    pub fn mean_pool_rows(&self) -> Result<Matrix> {
        if self.rows == 0 {
            return Err(Error::Empty("mean_pool_rows"));
        }
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }

    /// Column-wise maximum together with the winning row per column
    /// (first row wins ties).
    pub fn max_pool_rows(&self) -> Result<(Matrix, Vec<usize>)> {
        if self.rows == 0 {
            return Err(Error::Empty("max_pool_rows"));
        }
        let mut out = Matrix::row_vector(self.row(0).to_vec());
        let mut argmax = vec![0usize; self.cols];
        for r in 1..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                if v > out.data[c] {
                    out.data[c] = v;
                    argmax[c] = r;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Row sums as an `rows × 1` column.
    pub fn row_sums(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: 1,
            data: (0..self.rows).map(|r| self.row(r).iter().sum()).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Softmax of a slice into a fresh vector.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    if !out.is_empty() {
        softmax_in_place(&mut out);
    }
    out
}

/// Row-major `out = a × b` for an `m × k` by `k × n` product. Each output
/// entry accumulates over `k` in ascending order.
fn gemm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    const W: usize = 8;
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut j = 0;
        while j + W <= n {
            let mut acc = [0.0f64; W];
            for (kk, &av) in a_row.iter().enumerate() {
                let chunk: &[f64; W] = b[kk * n + j..kk * n + j + W].try_into().unwrap();
                for t in 0..W {
                    acc[t] += av * chunk[t];
                }
            }
            out_row[j..j + W].copy_from_slice(&acc);
            j += W;
        }
        for (jj, o) in out_row.iter_mut().enumerate().skip(j) {
            let mut acc = 0.0;
            for (kk, &av) in a_row.iter().enumerate() {
                acc += av * b[kk * n + jj];
            }
            *o = acc;
        }
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

pub fn softmax_row(x: &Matrix) -> Matrix {
    x.softmax_rows()
}

pub fn mean_pool_rows(x: &Matrix) -> Result<Matrix> {
    x.mean_pool_rows()
}

pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
    let rows = parts.first().map_or(0, |m| m.rows);
    let mut cols = 0;
    for p in parts {
        if p.rows != rows {
            return Err(Error::Shape {
                op: "concat_cols",
                left: (rows, cols),
                right: p.shape(),
            });
        }
        cols += p.cols;
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Ok(Matrix { rows, cols, data })
}

pub fn concat_rows(parts: &[&Matrix]) -> Result<Matrix> {
    let cols = parts.first().map_or(0, |m| m.cols);
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.cols != cols {
            return Err(Error::Shape {
                op: "concat_rows",
                left: (rows, cols),
                right: p.shape(),
            });
        }
        rows += p.rows;
        data.extend_from_slice(&p.data);
    }
    Ok(Matrix { rows, cols, data })
}

/// Lays out the zero-padded sliding windows of `x` as rows, so that a
/// same-length 1-D convolution becomes `im2col(x) × filters`.
///
/// Row `t` holds rows `t - k/2 ..= t + k/2` of `x` side by side, with zero
/// blocks where the window leaves the sequence.
pub fn im2col(x: &Matrix, kernel: usize) -> Result<Matrix> {
    if x.rows == 0 {
        return Err(Error::Empty("conv1d"));
    }
    if kernel.is_multiple_of(2) {
        return Err(Error::Config(alloc::format!(
            "conv1d kernel must be odd, got {kernel}"
        )));
    }
    let half = kernel / 2;
    let mut out = Matrix::zeros(x.rows, kernel * x.cols);
    for t in 0..x.rows {
        for k in 0..kernel {
            let src = t as isize + k as isize - half as isize;
            if src < 0 || src >= x.rows as isize {
                continue;
            }
            let dst = &mut out.data[t * kernel * x.cols + k * x.cols..][..x.cols];
            dst.copy_from_slice(x.row(src as usize));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_matmul_is_noop() {
        let a = Matrix::from_rows(&[[1.5, -2.0], [0.25, 3.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[2.0], [4.0]]).unwrap());
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        let msg = alloc::format!("{err}");
        assert!(msg.contains("(2, 3)"));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.0, 0.0, -3.0]]).unwrap();
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn softmax_uniform_row() {
        let s = Matrix::zeros(1, 3).softmax_rows();
        for &v in s.data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_two_element_matches_direct_evaluation() {
        let s = Matrix::from_rows(&[[4.0, 0.0]]).unwrap().softmax_rows();
        let e4 = libm::exp(4.0);
        assert_abs_diff_eq!(s.get(0, 0), e4 / (e4 + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(0, 1), 1.0 / (e4 + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let s = Matrix::from_rows(&[[1000.0, 0.0]]).unwrap().softmax_rows();
        assert!(s.is_finite());
        assert_abs_diff_eq!(s.get(0, 0), 1.0, epsilon = 1e-15);
        assert!(s.get(0, 1) < 1e-300);
    }

    #[test]
    fn mean_pool_cases() {
        let one = Matrix::from_rows(&[[1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(one.mean_pool_rows().unwrap(), one);
        let m = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        assert_eq!(
            m.mean_pool_rows().unwrap(),
            Matrix::from_rows(&[[1.0, 1.0]]).unwrap()
        );
        assert_eq!(
            Matrix::zeros(0, 2).mean_pool_rows().unwrap_err(),
            Error::Empty("mean_pool_rows")
        );
    }

    #[test]
    fn pooling_commutes_with_scaling() {
        let m = Matrix::from_rows(&[[0.3, -1.7], [2.2, 0.9], [-0.4, 5.1]]).unwrap();
        let a = m.mean_pool_rows().unwrap().scale(3.7);
        let b = m.scale(3.7).mean_pool_rows().unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn elementwise_fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(libm::tanh(0.0), 0.0);
        let s = Matrix::from_rows(&[[-1e6, 1e6, 50.0]]).unwrap().sigmoid();
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn concat_cols_preserves_order() {
        let a = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(
            c,
            Matrix::from_rows(&[[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]]).unwrap()
        );
        assert!(a.concat_cols(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn im2col_zero_pads_edges() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let cols = im2col(&x, 3).unwrap();
        assert_eq!(
            cols,
            Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.0, 3.0, 0.0]]).unwrap()
        );
        assert!(im2col(&x, 2).is_err());
        assert!(im2col(&Matrix::zeros(0, 1), 3).is_err());
    }
}
