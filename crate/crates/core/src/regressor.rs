//! Score regressors: the soft decision tree and a fully connected baseline.
//!
//! A soft tree of depth `D` has `2^(D−1) − 1` internal nodes in heap order
//! and `2^(D−1)` leaves counted left to right (see [`crate::kernel::routing`]).
//! Internal node `n` sends an input left with probability
//! `σ(w_n · z + b_n)`. The probability `μ_l` of reaching leaf `l` is the
//! product of the branch probabilities along its path, each leaf scores
//! `s_l = w_l · z + b_l`, and the prediction is `Σ_l μ_l s_l`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::matrix::{dot, sigmoid};
use crate::kernel::routing;
use crate::kernel::{Linear, Matrix, ParamStore, Rng, Tape, Var};

/// `(internal nodes, leaves)` for a tree of the given depth.
pub fn tree_shape(depth: usize) -> Result<(usize, usize)> {
    if !(2..=usize::BITS as usize).contains(&depth) {
        return Err(Error::Config(format!(
            "tree depth must be ≥ 2, got {depth}"
        )));
    }
    Ok((routing::internal_count(depth), routing::leaf_count(depth)))
}

/// Leaf-reach probabilities for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingVector {
    pub mu: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SoftTree {
    pub depth: usize,
    /// Column `n − 1` holds internal node `n`.
    pub splits: Linear,
    /// Column `l` holds leaf `l`.
    pub leaves: Linear,
}

impl SoftTree {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        depth: usize,
        z_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (internal, leaves) = tree_shape(depth)?;
        Ok(Self {
            depth,
            splits: Linear::new(store, &format!("{name}.splits"), z_dim, internal, rng),
            leaves: Linear::new(store, &format!("{name}.leaves"), z_dim, leaves, rng),
        })
    }

    fn z_dim(&self, store: &ParamStore) -> usize {
        self.splits.dims(store).0
    }

    fn check(&self, store: &ParamStore, z: &[f64]) -> Result<()> {
        if z.len() != self.z_dim(store) {
            return Err(Error::Shape {
                op: "soft_tree",
                left: (1, z.len()),
                right: (1, self.z_dim(store)),
            });
        }
        Ok(())
    }

    fn affine(store: &ParamStore, layer: &Linear, z: &[f64]) -> Vec<f64> {
        let w = &store.get(layer.weight).value;
        let b = &store.get(layer.bias).value;
        (0..w.cols())
            .map(|c| (0..w.rows()).map(|r| z[r] * w.get(r, c)).sum::<f64>() + b.get(0, c))
            .collect()
    }

    /// Left-branch probability of every internal node, indexed `n − 1`.
    pub fn left_probs(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        self.check(store, z)?;
        Ok(Self::affine(store, &self.splits, z)
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    pub fn route_probs(&self, store: &ParamStore, z: &[f64]) -> Result<RoutingVector> {
        let p = self.left_probs(store, z)?;
        Ok(RoutingVector {
            mu: routing::route(&p, self.depth),
        })
    }

    pub fn leaf_scores(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        self.check(store, z)?;
        Ok(Self::affine(store, &self.leaves, z))
    }

    pub fn predict(&self, store: &ParamStore, z: &[f64]) -> Result<f64> {
        let mu = self.route_probs(store, z)?.mu;
        let s = self.leaf_scores(store, z)?;
        Ok(dot(&mu, &s))
    }

    /// Leaf-reach probabilities for every row of `z` (`n × |ℒ|`).
    pub fn route_tape(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let logits = self.splits.forward(tape, store, z)?;
        let p = tape.sigmoid(logits);
        tape.routing(p, self.depth)
    }

    /// Scores for every row of `z`, as an `n × 1` node.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let mu = self.route_tape(tape, store, z)?;
        let s = self.leaves.forward(tape, store, z)?;
        let weighted = tape.mul(mu, s)?;
        Ok(tape.row_sums(weighted))
    }
}

/// Fully connected regressor: tanh between affine layers, scalar output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fcnn {
    pub layers: Vec<Linear>,
}

impl Fcnn {
    /// `widths` runs from the input width to 1, e.g. `[5d, 8, 4, 2, 1]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.last() != Some(&1) || widths.contains(&0) {
            return Err(Error::Config(format!(
                "fcnn widths must have ≥ 2 positive entries ending in 1, got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.layer{i}"), w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let mut h = z;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    pub fn predict(&self, store: &ParamStore, z: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.input(Matrix::row_vector(z.to_vec()));
        let out = self.forward(&mut tape, store, x)?;
        Ok(tape.value(out).get(0, 0))
    }
}

/// Which score head sits on top of the encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorSpec {
    /// Soft tree; `trees > 1` sums an additive ensemble of independent trees.
    Tree { depth: usize, trees: usize },
    /// Fully connected head with these hidden widths between `5d` and 1.
    Fcnn { hidden: Vec<usize> },
}

impl Default for RegressorSpec {
    fn default() -> Self {
        RegressorSpec::Tree { depth: 3, trees: 1 }
    }
}

impl RegressorSpec {
    pub fn short_name(&self) -> alloc::string::String {
        match self {
            RegressorSpec::Tree { depth, trees: 1 } => format!("tree{depth}"),
            RegressorSpec::Tree { depth, trees } => format!("tree{depth}x{trees}"),
            RegressorSpec::Fcnn { hidden } => {
                let mut s = alloc::string::String::from("fcnn");
                for h in hidden {
                    s.push_str(&format!("-{h}"));
                }
                s.push_str("-1");
                s
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Tree(Vec<SoftTree>),
    Fcnn(Fcnn),
}

impl Regressor {
    pub fn new(
        store: &mut ParamStore,
        spec: &RegressorSpec,
        z_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        match spec {
            RegressorSpec::Tree { depth, trees } => {
                if *trees == 0 {
                    return Err(Error::Config(
                        "tree ensemble needs at least one tree".into(),
                    ));
                }
                let trees = (0..*trees)
                    .map(|i| SoftTree::new(store, &format!("tree{i}"), *depth, z_dim, rng))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Regressor::Tree(trees))
            }
            RegressorSpec::Fcnn { hidden } => {
                let mut widths = vec![z_dim];
                widths.extend_from_slice(hidden);
                widths.push(1);
                Ok(Regressor::Fcnn(Fcnn::new(store, "fcnn", &widths, rng)?))
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        match self {
            Regressor::Tree(trees) => {
                let mut total = trees[0].forward(tape, store, z)?;
                for t in &trees[1..] {
                    let f = t.forward(tape, store, z)?;
                    total = tape.add(total, f)?;
                }
                Ok(total)
            }
            Regressor::Fcnn(f) => f.forward(tape, store, z),
        }
    }

    pub fn first_tree(&self) -> Option<&SoftTree> {
        match self {
            Regressor::Tree(trees) => trees.first(),
            Regressor::Fcnn(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(depth: usize, z_dim: usize) -> (SoftTree, ParamStore) {
        let mut store = ParamStore::new();
        let t = SoftTree::new(&mut store, "t", depth, z_dim, &mut Rng::new(4)).unwrap();
        (t, store)
    }

    fn zero(store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn shapes() {
        assert_eq!(tree_shape(2).unwrap(), (1, 2));
        assert_eq!(tree_shape(3).unwrap(), (3, 4));
        assert_eq!(tree_shape(5).unwrap(), (15, 16));
        assert!(tree_shape(1).is_err());
        assert!(tree_shape(0).is_err());
    }

    #[test]
    fn saturated_bias_routes_left() {
        let (t, mut store) = tree(4, 3);
        zero(&mut store);
        store.get_mut(t.splits.bias).value = Matrix::filled(1, 7, 50.0);
        let mu = t.route_probs(&store, &[0.3, -0.2, 1.0]).unwrap().mu;
        assert!((mu[0] - 1.0).abs() < 1e-12);
        assert!(mu[1..].iter().all(|&m| m < 1e-12 && m > 0.0));
    }

    #[test]
    fn zero_params_route_uniformly() {
        for depth in 2..=5 {
            let (t, mut store) = tree(depth, 4);
            zero(&mut store);
            let mu = t.route_probs(&store, &[1.0, 2.0, 3.0, 4.0]).unwrap().mu;
            let expected = 1.0 / (1u64 << (depth - 1)) as f64;
            assert!(mu.iter().all(|&m| m == expected));
        }
    }

    #[test]
    fn worked_path_example() {
        // Depth-4 leaf reached by right at 1, left at 3, right at 6.
        let (t, store) = tree(4, 3);
        let z = [0.7, -1.1, 0.4];
        let p = t.left_probs(&store, &z).unwrap();
        let mu = t.route_probs(&store, &z).unwrap().mu;
        let path = routing::leaf_path(4, 5);
        assert_eq!(
            path.iter().map(|s| (s.node, s.left)).collect::<Vec<_>>(),
            [(1, false), (3, true), (6, false)]
        );
        let expected = (1.0 - p[0]) * p[2] * (1.0 - p[5]);
        assert_eq!(mu[5], expected);
    }

    #[test]
    fn uniform_routing_predicts_mean_leaf_score() {
        let (t, mut store) = tree(3, 2);
        store.get_mut(t.splits.weight).value = Matrix::zeros(2, 3);
        let z = [0.5, -2.0];
        let s = t.leaf_scores(&store, &z).unwrap();
        let f = t.predict(&store, &z).unwrap();
        assert!((f - s.iter().sum::<f64>() / 4.0).abs() < 1e-14);
    }

    #[test]
    fn identical_leaves_ignore_routing() {
        let (t, mut store) = tree(3, 2);
        let col = [0.8, -0.3];
        let mut w = Matrix::zeros(2, 4);
        for c in 0..4 {
            w.set(0, c, col[0]);
            w.set(1, c, col[1]);
        }
        store.get_mut(t.leaves.weight).value = w;
        store.get_mut(t.leaves.bias).value = Matrix::filled(1, 4, 0.25);
        let z = [1.5, 2.0];
        let f = t.predict(&store, &z).unwrap();
        assert!((f - (0.8 * 1.5 - 0.3 * 2.0 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn leaf_scores_at_zero_are_biases() {
        let (t, mut store) = tree(3, 2);
        store.get_mut(t.leaves.bias).value = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(
            t.leaf_scores(&store, &[0.0, 0.0]).unwrap(),
            [1.0, 2.0, 3.0, 4.0]
        );
        assert!(t.leaf_scores(&store, &[0.0]).is_err());
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let (t, store) = tree(3, 3);
        let z = Matrix::from_rows(&[[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]]).unwrap();
        let mut tape = Tape::new();
        let zv = tape.input(z.clone());
        let f = t.forward(&mut tape, &store, zv).unwrap();
        for r in 0..2 {
            let plain = t.predict(&store, z.row(r)).unwrap();
            assert!((tape.value(f).get(r, 0) - plain).abs() < 1e-14);
        }
    }

    #[test]
    fn fcnn_zero_params_predict_zero() {
        let mut store = ParamStore::new();
        let f = Fcnn::new(&mut store, "f", &[4, 8, 4, 2, 1], &mut Rng::new(1)).unwrap();
        zero(&mut store);
        assert_eq!(f.predict(&store, &[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
        assert!(Fcnn::new(&mut store, "g", &[4, 2], &mut Rng::new(1)).is_err());
    }

    #[test]
    fn single_layer_fcnn_is_linear() {
        let mut store = ParamStore::new();
        let f = Fcnn::new(&mut store, "f", &[3, 1], &mut Rng::new(1)).unwrap();
        let w = store.get(f.layers[0].weight).value.clone();
        let z = [0.5, -1.0, 2.0];
        let expected: f64 = (0..3).map(|i| z[i] * w.get(i, 0)).sum();
        assert!((f.predict(&store, &z).unwrap() - expected).abs() < 1e-15);
    }
}
