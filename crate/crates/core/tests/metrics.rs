use helprank_core::kernel::Rng;
use helprank_core::objectives::{
    average_precision, evaluate_lists, ndcg_at, rank_order, score_separation, Gain, MetricConfig,
};

/// Rank of item `i`: items with a higher score come first, ties go to the
/// earlier index.
fn position(scores: &[f64], i: usize) -> usize {
    (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

fn ap_oracle(scores: &[f64], labels: &[u8], tau: u8) -> Option<f64> {
    let relevant: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] >= tau).collect();
    if relevant.is_empty() {
        return None;
    }
    let sum: f64 = relevant
        .iter()
        .map(|&i| {
            let k = position(scores, i);
            let above = relevant
                .iter()
                .filter(|&&j| position(scores, j) <= k)
                .count();
            above as f64 / (k + 1) as f64
        })
        .sum();
    Some(sum / relevant.len() as f64)
}

/// Same value up to floating-point summation order.
fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14
}

fn gain(y: u8, g: Gain) -> f64 {
    match g {
        Gain::Exponential => 2f64.powi(y as i32) - 1.0,
        Gain::Linear => y as f64,
    }
}

fn dcg_in_order(order: &[usize], labels: &[u8], n: usize, g: Gain) -> f64 {
    order
        .iter()
        .take(n)
        .enumerate()
        .map(|(k, &i)| gain(labels[i], g) / ((k + 2) as f64).log2())
        .sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// NDCG with the ideal DCG found by trying every ordering.
fn ndcg_oracle(scores: &[f64], labels: &[u8], n: usize, g: Gain) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by_key(|&i| position(scores, i));
    let ideal = permutations(scores.len())
        .iter()
        .map(|p| dcg_in_order(p, labels, n, g))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        return 1.0;
    }
    dcg_in_order(&order, labels, n, g) / ideal
}

#[test]
fn average_precision_of_hit_miss_hit() {
    let ap = average_precision(&[true, false, true]).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(average_precision(&[false, false]), None);
    assert_eq!(average_precision(&[true]), Some(1.0));
}

#[test]
fn metrics_match_enumeration_oracles() {
    let mut rng = Rng::new(99);
    for case in 0..10_000 {
        let len = rng.int_inclusive(1, 5);
        let labels: Vec<u8> = (0..len).map(|_| rng.index(5) as u8).collect();
        // Scores from a small grid so ties are common.
        let scores: Vec<f64> = (0..len).map(|_| rng.index(4) as f64 * 0.5).collect();
        let tau = rng.int_inclusive(1, 4) as u8;
        let g = if case % 2 == 0 {
            Gain::Exponential
        } else {
            Gain::Linear
        };

        let order = rank_order(&scores);
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(position(&scores, i), k);
        }
        let ranked: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        for n in [1, 3, 5] {
            assert!(
                same(ndcg_at(&ranked, n, g), ndcg_oracle(&scores, &labels, n, g)),
                "case {case} n {n}"
            );
        }
        let m = evaluate_lists(
            [(scores.as_slice(), labels.as_slice())],
            MetricConfig { tau, gain: g },
        );
        assert!(
            same(m.map, ap_oracle(&scores, &labels, tau).unwrap_or(0.0)),
            "case {case}"
        );
        assert!(same(m.ndcg3, ndcg_oracle(&scores, &labels, 3, g)));
        assert!(same(m.ndcg5, ndcg_oracle(&scores, &labels, 5, g)));
    }
}

#[test]
fn map_averages_only_lists_with_relevant_reviews() {
    let a = ([0.9, 0.1], [3u8, 0]);
    let b = ([0.1, 0.9], [3u8, 0]);
    let none = ([0.5, 0.4], [0u8, 0]);
    let cfg = MetricConfig {
        tau: 3,
        gain: Gain::Exponential,
    };
    let m = evaluate_lists(
        [
            (&a.0[..], &a.1[..]),
            (&b.0[..], &b.1[..]),
            (&none.0[..], &none.1[..]),
        ],
        cfg,
    );
    assert!((m.map - 0.75).abs() < 1e-15);
    assert!(evaluate_lists(std::iter::empty(), cfg).map == 0.0);
}

#[test]
fn separation_counts_ordered_pairs() {
    assert_eq!(
        score_separation(&[3.0, 2.0, 1.0], &[4, 4, 0], 3).unwrap(),
        1.0
    );
    assert_eq!(
        score_separation(&[1.0, 2.0, 3.0], &[4, 4, 0], 3).unwrap(),
        0.0
    );
    assert_eq!(score_separation(&[1.0, 1.0], &[4, 0], 3).unwrap(), 0.5);
    assert!(score_separation(&[1.0, 2.0], &[4, 4], 3).is_err());
}
