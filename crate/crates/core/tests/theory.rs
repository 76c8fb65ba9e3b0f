use helprank_core::kernel::Rng;
use helprank_core::objectives::{
    listwise_loss, pairwise_loss_at, pairwise_margin, LossKind, ScoredList,
};
use helprank_core::theoria::{
    base10_list_remark, check_bound_monotonicity, check_concave_probe, check_convexity,
    check_gradient_bounds, check_loss_bounds, generalization_bound, loss_bounds, BoundInputs,
};
use proptest::prelude::*;

#[test]
fn both_losses_pass_jensen_and_the_probe_is_caught() {
    let mut rng = Rng::new(1);
    for kind in [LossKind::Listwise, LossKind::Pairwise] {
        let r = check_convexity(kind, 1000, &mut rng);
        assert_eq!(r.trials, 1000);
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.pass);
    }
    let probe = check_concave_probe(1000, &mut rng);
    assert!(probe.violations > 0);
    assert!(!probe.pass);
}

#[test]
fn gradients_stay_bounded() {
    let mut rng = Rng::new(2);
    let g = check_gradient_bounds(10_000, &mut rng).unwrap();
    assert!(g.report.pass, "{:?}", g.report);
    assert!(g.gamma_list <= 1.0);
    assert_eq!(g.gamma_pair, 1.0);
}

#[test]
fn margin_is_the_label_range() {
    assert_eq!(pairwise_margin(&[0, 1, 2, 3, 4]), 4.0);
    assert_eq!(pairwise_margin(&[4, 0]), 4.0);
    assert_eq!(pairwise_margin(&[2, 2]), 0.0);
}

#[test]
fn pairwise_subgradient_values() {
    let list = ScoredList::new(vec![0.0, 0.0], vec![4, 0]).unwrap();
    assert_eq!(pairwise_loss_at(&list, 0, 1).grad, vec![-1.0, 1.0]);
    // Separated beyond the margin: inactive.
    let list = ScoredList::new(vec![5.0, 0.0], vec![4, 0]).unwrap();
    let l = pairwise_loss_at(&list, 0, 1);
    assert_eq!(l.value, 0.0);
    assert_eq!(l.grad, vec![0.0, 0.0]);
    // Exactly on the kink.
    let list = ScoredList::new(vec![4.0, 0.0], vec![4, 0]).unwrap();
    assert_eq!(pairwise_loss_at(&list, 0, 1).grad, vec![0.0, 0.0]);
}

#[test]
fn sampled_losses_respect_closed_form_bounds() {
    let mut rng = Rng::new(3);
    for (lo, hi) in [(-5.0, 5.0), (0.0, 1.0), (-50.0, 10.0)] {
        let r = check_loss_bounds(1000, lo, hi, &mut rng).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
    }
    let single = ScoredList::new(vec![3.0], vec![2]).unwrap();
    let (bl, _) = loss_bounds(1, 0.0, 0.0);
    assert_eq!(listwise_loss(&single).value, 0.0);
    assert!(listwise_loss(&single).value <= bl);
}

#[test]
fn largest_list_log_stays_within_label_range() {
    let (v, ok) = base10_list_remark(2043);
    assert!((v - 3.31).abs() < 0.005);
    assert!(ok);
    assert!(!base10_list_remark(20_000).1);
}

#[test]
fn bound_special_cases() {
    let zero = BoundInputs::constant_rate(0.0, 0.0, 10, 0.1, 100, 0.05);
    assert_eq!(generalization_bound(&zero).unwrap(), 0.0);
    // With δ = 2 the log terms vanish and only 2γ²Σλ/N remains.
    let at_two = BoundInputs::constant_rate(1.5, 7.0, 4, 0.25, 8, 2.0);
    let want = 2.0 * 1.5 * 1.5 * 1.0 / 8.0;
    assert!((generalization_bound(&at_two).unwrap() - want).abs() < 1e-15);
    for delta in [0.0, -1.0, 2.5, f64::NAN] {
        let bad = BoundInputs::constant_rate(1.0, 1.0, 1, 0.1, 1, delta);
        assert!(generalization_bound(&bad).is_err());
    }
}

#[test]
fn bound_by_hand() {
    let inputs = BoundInputs::constant_rate(0.5, 2.0, 100, 0.01, 50, 0.1);
    let l = (2.0f64 / 0.1).ln();
    let want = 2.0 * (l / 100.0).sqrt()
        + 2.0 * 0.25 * 1.0 * (2.0 * (l / 100.0).sqrt() + (2.0 * l / 50.0).sqrt() + 1.0 / 50.0);
    assert!((generalization_bound(&inputs).unwrap() - want).abs() < 1e-12);
}

#[test]
fn listwise_inputs_give_the_smaller_bound() {
    let mut rng = Rng::new(4);
    assert!(check_bound_monotonicity(1000, &mut rng).unwrap().pass);
    let (l_list, l_pair) = loss_bounds(30, 10.0, 4.0);
    assert!(l_list < l_pair);
    for (g_list, g_pair) in [(0.5, 1.0), (0.99, 1.0), (1.0, 1.5)] {
        let list = BoundInputs::constant_rate(g_list, l_list, 1000, 1e-3, 200, 0.05);
        let pair = BoundInputs::constant_rate(g_pair, l_pair, 1000, 1e-3, 200, 0.05);
        assert!(generalization_bound(&list).unwrap() < generalization_bound(&pair).unwrap());
    }
}

fn list_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (1usize..20).prop_flat_map(|n| {
        (
            prop::collection::vec(-30.0f64..30.0, n),
            prop::collection::vec(0u8..5, n),
        )
    })
}

proptest! {
    #[test]
    fn listwise_gradient_is_a_difference_of_distributions((scores, labels) in list_strategy()) {
        let l = listwise_loss(&ScoredList::new(scores, labels).unwrap());
        prop_assert!(l.value >= 0.0);
        prop_assert!(l.grad.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(l.grad.iter().all(|g| g.abs() <= 1.0));
    }

    #[test]
    fn listwise_loss_ignores_score_shifts((scores, labels) in list_strategy(), shift in -10.0f64..10.0) {
        let a = listwise_loss(&ScoredList::new(scores.clone(), labels.clone()).unwrap());
        let shifted = scores.iter().map(|s| s + shift).collect();
        let b = listwise_loss(&ScoredList::new(shifted, labels).unwrap());
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }
}
