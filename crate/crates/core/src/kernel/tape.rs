//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! A [`Tape`] records each operation as it is evaluated. [`Tape::backward`]
//! seeds one node with an upstream gradient and walks the tape in reverse,
//! producing vector-Jacobian products for every earlier node. Learned
//! weights live in a [`ParamStore`]; the tape reads them through
//! [`Tape::param`] and [`Gradients::accumulate`] adds their gradients back.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{self, Matrix};
use super::routing;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A learned weight and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered collection of parameters. Insertion order is the serialization
/// and optimizer order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Overwrites values from `(name, matrix)` pairs. Every stored
    /// parameter must be present with its exact shape.
    pub fn load_values<'a>(
        &mut self,
        values: impl IntoIterator<Item = (&'a str, &'a Matrix)>,
    ) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for (name, m) in values {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Schema(alloc::format!("unknown parameter `{name}`")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != m.shape() {
                return Err(Error::Shape {
                    op: "load_values",
                    left: p.value.shape(),
                    right: m.shape(),
                });
            }
            p.value = m.clone();
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(alloc::format!(
                "missing parameter `{}`",
                self.params[i].name
            )));
        }
        Ok(())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    /// `a × bᵀ`
    MatMulT(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    Im2Col(Var, usize),
    RowSums(Var),
    Routing(Var, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input. Its gradient is still reported by
    /// [`Gradients::wrt`].
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// Reads a parameter. Repeated reads of the same id share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a × bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = self.value(x).add_row_bias(self.value(bias))?;
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).scale(s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).sigmoid();
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).tanh();
        self.push(out, Op::Tanh(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = self.value(x).softmax_rows();
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let out = matrix::concat_cols(&mats)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let out = matrix::concat_rows(&mats)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mean_pool_rows()?;
        Ok(self.push(out, Op::MeanRows(x)))
    }

    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = self.value(x).max_pool_rows()?;
        Ok(self.push(out, Op::MaxRows(x, argmax)))
    }

    pub fn im2col(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let out = matrix::im2col(self.value(x), kernel)?;
        Ok(self.push(out, Op::Im2Col(x, kernel)))
    }

    pub fn row_sums(&mut self, x: Var) -> Var {
        let out = self.value(x).row_sums();
        self.push(out, Op::RowSums(x))
    }

    /// Maps per-row left-branch probabilities (`n × internal_count(depth)`)
    /// to per-row leaf-reach probabilities (`n × leaf_count(depth)`).
    pub fn routing(&mut self, p_left: Var, depth: usize) -> Result<Var> {
        let p = self.value(p_left);
        if depth < 2 || p.cols() != routing::internal_count(depth) {
            return Err(Error::Shape {
                op: "routing",
                left: p.shape(),
                right: (depth, routing::internal_count(depth.max(1))),
            });
        }
        let mut out = Matrix::zeros(p.rows(), routing::leaf_count(depth));
        for r in 0..p.rows() {
            let mu = routing::route(p.row(r), depth);
            out.row_mut(r).copy_from_slice(&mu);
        }
        Ok(self.push(out, Op::Routing(p_left, depth)))
    }

    /// Propagates `seed` (the gradient of some scalar with respect to
    /// `root`) back through every node recorded before `root`.
    pub fn backward(&self, root: Var, seed: Matrix) -> Result<Gradients> {
        if seed.shape() != self.value(root).shape() {
            return Err(Error::Shape {
                op: "backward",
                left: self.value(root).shape(),
                right: seed.shape(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MatMulT(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::AddBias(x, b) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *b, db)?;
                    accumulate(&mut grads, *x, g.clone())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Mul(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, g.scale(*s))?,
                Op::Sigmoid(x) => {
                    let dy = node.value.map(|y| y * (1.0 - y));
                    accumulate(&mut grads, *x, g.hadamard(&dy)?)?;
                }
                Op::Tanh(x) => {
                    let dy = node.value.map(|y| 1.0 - y * y);
                    accumulate(&mut grads, *x, g.hadamard(&dy)?)?;
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = matrix::dot(yr, gr);
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            dp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        accumulate(&mut grads, p, dp)?;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let dp = Matrix::from_vec(
                            pr,
                            pc,
                            g.data()[offset * pc..(offset + pr) * pc].to_vec(),
                        )?;
                        offset += pr;
                        accumulate(&mut grads, p, dp)?;
                    }
                }
                Op::MeanRows(x) => {
                    let (n, c) = self.value(*x).shape();
                    let mut dx = Matrix::zeros(n, c);
                    let inv = 1.0 / n as f64;
                    for r in 0..n {
                        for (d, v) in dx.row_mut(r).iter_mut().zip(g.data()) {
                            *d = v * inv;
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::MaxRows(x, argmax) => {
                    let (n, c) = self.value(*x).shape();
                    let mut dx = Matrix::zeros(n, c);
                    for (col, &r) in argmax.iter().enumerate() {
                        dx.set(r, col, g.get(0, col));
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Im2Col(x, kernel) => {
                    let (n, c) = self.value(*x).shape();
                    let half = kernel / 2;
                    let mut dx = Matrix::zeros(n, c);
                    for t in 0..n {
                        for k in 0..*kernel {
                            let src = t as isize + k as isize - half as isize;
                            if src < 0 || src >= n as isize {
                                continue;
                            }
                            let block = &g.row(t)[k * c..(k + 1) * c];
                            for (d, v) in dx.row_mut(src as usize).iter_mut().zip(block) {
                                *d += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::RowSums(x) => {
                    let (n, c) = self.value(*x).shape();
                    let mut dx = Matrix::zeros(n, c);
                    for r in 0..n {
                        let gr = g.get(r, 0);
                        dx.row_mut(r).iter_mut().for_each(|d| *d = gr);
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Routing(p, depth) => {
                    let pv = self.value(*p);
                    let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                    for r in 0..pv.rows() {
                        routing::route_backward(pv.row(r), *depth, g.row(r), dp.row_mut(r));
                    }
                    accumulate(&mut grads, *p, dp)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn param_nodes(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.param_vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence
    /// the seeded node.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients into `store`.
    pub fn accumulate(&self, tape: &Tape, store: &mut ParamStore) -> Result<()> {
        for (id, v) in tape.param_nodes() {
            if let Some(g) = self.wrt(v) {
                store.get_mut(id).grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}
