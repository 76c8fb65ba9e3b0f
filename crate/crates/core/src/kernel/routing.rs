//! Path arithmetic for complete binary trees in heap order.
//!
//! Internal nodes are numbered `1..2^(depth-1)` with children `2n` and
//! `2n + 1`. Leaf `l` (counted left to right from 0) sits at heap position
//! `2^(depth-1) + l`, so the bits of `l` read from the most significant end
//! spell out its root-to-leaf turns (0 = left, 1 = right).

use alloc::vec::Vec;

/// One step on a root-to-leaf path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Turn {
    /// Heap index of the internal node, starting at 1.
    pub node: usize,
    pub left: bool,
}

pub fn internal_count(depth: usize) -> usize {
    (1usize << (depth - 1)) - 1
}

pub fn leaf_count(depth: usize) -> usize {
    1usize << (depth - 1)
}

/// Root-first path to leaf `leaf`.
pub fn leaf_path(depth: usize, leaf: usize) -> Vec<Turn> {
    let mut heap = leaf_count(depth) + leaf;
    let mut path = Vec::with_capacity(depth - 1);
    while heap > 1 {
        let parent = heap / 2;
        path.push(Turn {
            node: parent,
            left: heap.is_multiple_of(2),
        });
        heap = parent;
    }
    path.reverse();
    path
}

/// Leaf-reach probabilities from the per-node left probabilities.
/// `p_left[n - 1]` belongs to internal node `n`.
pub fn route(p_left: &[f64], depth: usize) -> Vec<f64> {
    (0..leaf_count(depth))
        .map(|leaf| {
            leaf_path(depth, leaf)
                .iter()
                .map(|t| branch(p_left, *t))
                .product()
        })
        .collect()
}

#[inline]
pub(crate) fn branch(p_left: &[f64], t: Turn) -> f64 {
    let p = p_left[t.node - 1];
    if t.left {
        p
    } else {
        1.0 - p
    }
}

/// Accumulates `d(Σ_l upstream_l μ_l) / d p_left` into `out`.
pub(crate) fn route_backward(p_left: &[f64], depth: usize, upstream: &[f64], out: &mut [f64]) {
    for (leaf, &g) in upstream.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let path = leaf_path(depth, leaf);
        for (i, t) in path.iter().enumerate() {
            let others: f64 = path
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, u)| branch(p_left, *u))
                .product();
            let sign = if t.left { 1.0 } else { -1.0 };
            out[t.node - 1] += g * sign * others;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_depth() {
        assert_eq!((internal_count(2), leaf_count(2)), (1, 2));
        assert_eq!((internal_count(3), leaf_count(3)), (3, 4));
        assert_eq!((internal_count(5), leaf_count(5)), (15, 16));
    }

    #[test]
    fn leftmost_and_rightmost_paths() {
        let left = leaf_path(3, 0);
        assert_eq!(
            left,
            [
                Turn {
                    node: 1,
                    left: true
                },
                Turn {
                    node: 2,
                    left: true
                }
            ]
        );
        let right = leaf_path(3, 3);
        assert_eq!(
            right,
            [
                Turn {
                    node: 1,
                    left: false
                },
                Turn {
                    node: 3,
                    left: false
                }
            ]
        );
    }
}
