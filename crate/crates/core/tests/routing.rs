use helprank_core::data::{generate, GenConfig};
use helprank_core::kernel::routing::{leaf_count, route};
use helprank_core::kernel::{Matrix, Rng};
use helprank_core::model::{Model, ModelConfig};
use helprank_core::regressor::{tree_shape, RegressorSpec};
use helprank_core::trainer::TrainConfig;
use proptest::prelude::*;

/// Walks every root-to-leaf path recursively, multiplying branch
/// probabilities; leaves come out in left-to-right order.
fn enumerate(p_left: &[f64], node: usize, depth: usize, acc: f64, out: &mut Vec<f64>) {
    if depth == 1 {
        out.push(acc);
        return;
    }
    let p = p_left[node - 1];
    enumerate(p_left, 2 * node, depth - 1, acc * p, out);
    enumerate(p_left, 2 * node + 1, depth - 1, acc * (1.0 - p), out);
}

fn oracle(p_left: &[f64], depth: usize) -> Vec<f64> {
    let mut out = Vec::new();
    enumerate(p_left, 1, depth, 1.0, &mut out);
    out
}

#[test]
fn shapes_follow_the_heap_layout() {
    assert_eq!(tree_shape(2).unwrap(), (1, 2));
    assert_eq!(tree_shape(3).unwrap(), (3, 4));
    assert_eq!(tree_shape(5).unwrap(), (15, 16));
    assert!(tree_shape(1).is_err());
    assert!(tree_shape(0).is_err());
}

#[test]
fn routing_sums_to_one_and_matches_enumeration() {
    let mut rng = Rng::new(2024);
    for depth in 2..=5 {
        let internal = tree_shape(depth).unwrap().0;
        for _ in 0..10_000 {
            let p: Vec<f64> = (0..internal).map(|_| rng.uniform()).collect();
            let mu = route(&p, depth);
            assert_eq!(mu.len(), leaf_count(depth));
            let total: f64 = mu.iter().sum();
            assert!((total - 1.0).abs() <= 1e-9, "depth {depth}: sum {total}");
            for (a, b) in mu.iter().zip(oracle(&p, depth)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn tape_routing_matches_plain_routing() {
    let mut rng = Rng::new(5);
    let depth = 4;
    let internal = tree_shape(depth).unwrap().0;
    let rows = 6;
    let p = Matrix::from_vec(
        rows,
        internal,
        (0..rows * internal).map(|_| rng.uniform()).collect(),
    )
    .unwrap();
    let mut tape = helprank_core::kernel::Tape::new();
    let v = tape.input(p.clone());
    let mu = tape.routing(v, depth).unwrap();
    let mu = tape.value(mu);
    for r in 0..rows {
        assert_eq!(mu.row(r), oracle(p.row(r), depth).as_slice());
    }
}

#[test]
fn zero_parameter_tree_routes_uniformly() {
    let data = generate(&GenConfig {
        n_products: 3,
        d_tok: 6,
        d_img: 5,
        seed: 3,
        ..GenConfig::default()
    })
    .unwrap();
    for depth in [2, 3, 5] {
        let cfg = TrainConfig {
            hidden: 4,
            regressor: RegressorSpec::Tree { depth, trees: 1 },
            ..TrainConfig::default()
        };
        let mut model = Model::new(cfg.model_config(6, 5)).unwrap();
        for p in model.store.iter_mut() {
            p.value = Matrix::zeros(p.value.rows(), p.value.cols());
        }
        let uniform = 0.5f64.powi(depth as i32 - 1);
        for product in &data.products {
            let mu = model.routing(product).unwrap().unwrap();
            assert_eq!(mu.rows(), product.reviews.len());
            assert!(mu.data().iter().all(|&m| m == uniform));
        }
    }
}

#[test]
fn fcnn_model_has_no_routing() {
    let cfg: ModelConfig = TrainConfig {
        regressor: RegressorSpec::Fcnn { hidden: vec![4, 2] },
        hidden: 4,
        ..TrainConfig::default()
    }
    .model_config(3, 3);
    let model = Model::new(cfg).unwrap();
    let data = generate(&GenConfig {
        n_products: 1,
        d_tok: 3,
        d_img: 3,
        ..GenConfig::default()
    })
    .unwrap();
    assert!(model.routing(&data.products[0]).unwrap().is_none());
}

proptest! {
    #[test]
    fn routing_is_a_distribution(depth in 2usize..=6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let internal = tree_shape(depth).unwrap().0;
        let p: Vec<f64> = (0..internal).map(|_| rng.uniform()).collect();
        let mu = route(&p, depth);
        prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
        prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
