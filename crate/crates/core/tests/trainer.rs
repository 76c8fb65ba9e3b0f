use helprank_core::data::{generate, split, Dataset, GenConfig};
use helprank_core::model::Model;
use helprank_core::objectives::LossKind;
use helprank_core::trainer::{
    delta_map, evaluate, generalization_curve, min_max_normalize, train, EpochReport, Splits,
    TrainConfig,
};
use helprank_core::Error;

fn small_data(n_products: usize, seed: u64) -> Dataset {
    generate(&GenConfig {
        n_products,
        reviews_min: 3,
        reviews_max: 6,
        d_tok: 5,
        d_img: 4,
        seed,
        ..GenConfig::default()
    })
    .unwrap()
}

fn small_config(loss: LossKind) -> TrainConfig {
    TrainConfig {
        loss,
        hidden: 4,
        epochs: 3,
        batch_size: 4,
        lr: 5e-3,
        ..TrainConfig::default()
    }
}

fn report(epoch: usize, r_train: f64, r_val: f64) -> EpochReport {
    EpochReport {
        epoch,
        r_train,
        r_val,
        e_hat: 0.0,
        map: 0.0,
        ndcg3: 0.0,
        ndcg5: 0.0,
    }
}

#[test]
fn training_is_deterministic() {
    let data = small_data(18, 1);
    let (tr, va, te) = split(&data, [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1).unwrap();
    let splits = Splits {
        train: &tr,
        val: &va,
        test: &te,
    };
    for loss in [LossKind::Listwise, LossKind::Pairwise] {
        let a = train(splits, &small_config(loss)).unwrap();
        let b = train(splits, &small_config(loss)).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.model, b.model);
        assert_eq!(a.best_epoch, b.best_epoch);
        let c = train(
            splits,
            &TrainConfig {
                seed: 8,
                ..small_config(loss)
            },
        )
        .unwrap();
        assert_ne!(a.model, c.model);
    }
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let data = small_data(6, 2);
    let splits = Splits {
        train: &data,
        val: &data,
        test: &data,
    };
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_config(LossKind::Listwise)
    };
    let run = train(splits, &cfg).unwrap();
    let initial = Model::new(cfg.model_config(5, 4)).unwrap();
    for (a, b) in run.model.store.iter().zip(initial.store.iter()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }
    assert!(run.reports.windows(2).all(|w| w[0].r_train == w[1].r_train));
}

#[test]
fn one_small_step_lowers_the_training_loss() {
    let data = small_data(2, 3);
    let splits = Splits {
        train: &data,
        val: &data,
        test: &data,
    };
    for loss in [LossKind::Listwise, LossKind::Pairwise] {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            lr: 1e-4,
            ..small_config(loss)
        };
        let before = evaluate(
            &Model::new(cfg.model_config(5, 4)).unwrap(),
            &data,
            loss,
            cfg.metrics,
        )
        .unwrap()
        .loss;
        let after = train(splits, &cfg).unwrap().reports[0].r_train;
        assert!(after < before, "{loss:?}: {after} !< {before}");
    }
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let data = small_data(4, 4);
    let splits = Splits {
        train: &data,
        val: &data,
        test: &data,
    };
    let cfg = TrainConfig {
        epochs: 0,
        ..small_config(LossKind::Listwise)
    };
    let run = train(splits, &cfg).unwrap();
    assert!(run.reports.is_empty());
    assert_eq!(run.best_epoch, None);
    assert_eq!(run.model, Model::new(cfg.model_config(5, 4)).unwrap());
}

#[test]
fn mismatched_widths_are_a_schema_error() {
    let a = small_data(4, 5);
    let b = generate(&GenConfig {
        n_products: 2,
        d_tok: 6,
        d_img: 4,
        ..GenConfig::default()
    })
    .unwrap();
    let splits = Splits {
        train: &a,
        val: &b,
        test: &a,
    };
    match train(splits, &small_config(LossKind::Listwise)) {
        Err(Error::Schema(msg)) => assert!(msg.contains("d_tok")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn hand_computed_generalization_curve() {
    let reports = [
        report(0, 3.0, 4.0),
        report(1, 2.0, 3.5),
        report(2, 1.0, 3.75),
    ];
    // train normalizes to [1, 0.5, 0], val to [1, 0, 0.5].
    let curve = generalization_curve(&reports).unwrap();
    assert_eq!(curve, vec![0.0, -0.5, 0.5]);
    assert!(generalization_curve(&reports[..1]).is_err());
    assert_eq!(min_max_normalize(&[2.0, 2.0]), vec![0.0, 0.0]);
}

#[test]
fn delta_map_examples() {
    assert!((delta_map(89.3, 68.8) - 20.5).abs() < 1e-9);
    assert!((delta_map(78.4, 74.2) - 4.2).abs() < 1e-9);
    assert_eq!(delta_map(0.5, 0.7), delta_map(0.7, 0.5));
}

#[test]
fn reports_carry_the_normalized_gap() {
    let data = small_data(12, 6);
    let (tr, va, te) = split(&data, [0.5, 0.25, 0.25], 6).unwrap();
    let run = train(
        Splits {
            train: &tr,
            val: &va,
            test: &te,
        },
        &small_config(LossKind::Listwise),
    )
    .unwrap();
    assert_eq!(run.reports.len(), 3);
    let want = generalization_curve(&run.reports).unwrap();
    let got: Vec<f64> = run.reports.iter().map(|r| r.e_hat).collect();
    assert_eq!(got, want);
    assert!(got.iter().all(|e| (-1.0..=1.0).contains(e)));
    let best = run.best_epoch.unwrap();
    assert_eq!(run.val.metrics.map, run.reports[best].map);
    assert_eq!(
        run.delta_map,
        delta_map(run.train.metrics.map, run.test.metrics.map)
    );
}
