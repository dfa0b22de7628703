use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use sledge_core::estimator::{
    estimator_error, init_estimator, sledge_step, EstimatorState, InitOption, Mode, SledgeConfig,
};
use sledge_core::metrics::true_gradient;
use sledge_core::problems::{
    class_groups, make_logistic, make_quadratic_pl, make_saddle_ensemble, synthetic_classification, Grouping,
    LogisticProblem, SyntheticClassSpec,
};
use sledge_core::rng::{Purpose, SeedStream};
use sledge_core::{vector, FiniteSumProblem};

fn logistic(seed: u64) -> LogisticProblem {
    let ds = synthetic_classification(&SyntheticClassSpec {
        classes: 4,
        samples_per_class: 30,
        features: 3,
        separation: 1.5,
        noise: 1.0,
        bias: true,
        seed,
    })
    .unwrap();
    let groups = class_groups(&ds, 3, 8, seed).unwrap();
    make_logistic(Arc::new(ds), 0.01, Grouping::Explicit(groups)).unwrap()
}

fn naive_mean(state: &EstimatorState) -> Vec<f64> {
    state.materialized_mean()
}

#[test]
fn cross_mode_equivalence_over_1000_steps() {
    let problems: Vec<Box<dyn FiniteSumProblem>> = vec![
        Box::new(make_quadratic_pl(6, 0.1, 1.0, 20, 0.5, 4).unwrap()),
        Box::new(logistic(2)),
        Box::new(make_saddle_ensemble(5, 16, 0.5, 9).unwrap()),
    ];
    for p in &problems {
        let n = p.num_components();
        for option in [InitOption::Full, InitOption::Minibatch] {
            let c = SledgeConfig { eta: 0.05, b: 3.min(n), steps: 1000, r: 0.01, option, seed: 17 };
            let x0 = vec![0.3; p.dim()];
            let mut naive = init_estimator(p.as_ref(), &x0, &c, Mode::Naive).unwrap();
            let mut fast = init_estimator(p.as_ref(), &x0, &c, Mode::Efficient).unwrap();
            for _ in 0..1000 {
                sledge_step(&mut naive, p.as_ref(), &c).unwrap();
                sledge_step(&mut fast, p.as_ref(), &c).unwrap();
                assert!(vector::rel_err(fast.iterate(), naive.iterate()) <= 1e-10);
                let err = vector::rel_err(fast.aggregate(), naive.aggregate());
                assert!(err <= 1e-10, "step {} rel err {err:e}", naive.step());
            }
        }
    }
}

#[test]
fn efficient_row_writes_bounded_by_batch() {
    for n in [16usize, 256, 2048] {
        let p = make_quadratic_pl(3, 0.1, 1.0, n, 0.3, 1).unwrap();
        let b = 4;
        let c = SledgeConfig { eta: 0.1, b, steps: 50, r: 0.0, option: InitOption::Full, seed: 0 };
        let mut s = init_estimator(&p, &[1.0; 3], &c, Mode::Efficient).unwrap();
        for _ in 0..50 {
            sledge_step(&mut s, &p, &c).unwrap();
            assert!(s.last_row_writes() <= 4 * b as u64);
        }
        assert_eq!(s.row_writes(), n as u64 + 50 * 2 * b as u64);
    }
}

#[test]
fn grad_call_accounting_closed_form() {
    let p = logistic(5);
    let n = p.num_components() as u64;
    for (option, init) in [(InitOption::Full, n), (InitOption::Minibatch, 5)] {
        let c = SledgeConfig { eta: 0.1, b: 5, steps: 37, r: 0.0, option, seed: 1 };
        let mut s = init_estimator(&p, &vec![0.0; p.dim()], &c, Mode::Efficient).unwrap();
        for _ in 0..37 {
            sledge_step(&mut s, &p, &c).unwrap();
        }
        assert_eq!(s.grad_calls(), init + 2 * 5 * 37);
    }
}

#[test]
fn sampled_rows_are_fresh_gradients() {
    let p = logistic(7);
    let c = SledgeConfig { eta: 0.2, b: 4, steps: 200, r: 0.001, option: InitOption::Full, seed: 11 };
    for mode in [Mode::Naive, Mode::Efficient] {
        let mut s = init_estimator(&p, &vec![0.0; p.dim()], &c, mode).unwrap();
        let mut spot = SeedStream::new(99).rng(Purpose::Audit, 0);
        let mut checked = 0;
        for _ in 0..200 {
            let rec = sledge_step(&mut s, &p, &c).unwrap();
            if checked < 10 && rec.step % 20 == 0 {
                let i = *rec.indices.choose(&mut spot).unwrap();
                let direct = p.component_grad(i, s.iterate());
                assert!(vector::rel_err(&s.row(i), &direct) <= 1e-12);
                checked += 1;
            }
        }
        assert_eq!(checked, 10);
    }
}

#[test]
fn homogeneous_components_track_true_gradient() {
    let p = make_quadratic_pl(5, 0.2, 1.0, 12, 0.0, 3).unwrap();
    let c = SledgeConfig { eta: 0.3, b: 2, steps: 300, r: 0.0, option: InitOption::Full, seed: 8 };
    let x0 = [1.0, -2.0, 0.5, 3.0, 0.0];
    let mut s = init_estimator(&p, &x0, &c, Mode::Efficient).unwrap();
    for _ in 0..300 {
        sledge_step(&mut s, &p, &c).unwrap();
        let g = true_gradient(&p, s.iterate());
        let scale = vector::norm_sq(&g).max(vector::norm_sq(&x0) * 1e-30);
        assert!(estimator_error(&s, &p) <= 1e-18 * scale.max(1.0));
    }
}

#[test]
fn logistic_error_matches_naive_table_oracle() {
    let p = logistic(3);
    let c = SledgeConfig { eta: 0.1, b: 3, steps: 50, r: 0.0, option: InitOption::Full, seed: 4 };
    let mut s = init_estimator(&p, &vec![0.0; p.dim()], &c, Mode::Naive).unwrap();
    for _ in 0..50 {
        sledge_step(&mut s, &p, &c).unwrap();
    }
    let mean = naive_mean(&s);
    let g = true_gradient(&p, s.iterate());
    let oracle: f64 = mean.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
    let got = estimator_error(&s, &p);
    assert!((got - oracle).abs() <= 1e-12 * oracle.max(1e-300), "{got:e} vs {oracle:e}");
    assert!(got > 0.0);
}

#[test]
fn seeded_runs_are_reproducible() {
    let p = logistic(1);
    let c = SledgeConfig { eta: 0.1, b: 4, steps: 40, r: 0.05, option: InitOption::Minibatch, seed: 21 };
    let run = || {
        let mut s = init_estimator(&p, &vec![0.0; p.dim()], &c, Mode::Efficient).unwrap();
        let rows: Vec<String> = (0..40).map(|_| sledge_step(&mut s, &p, &c).unwrap().csv_row()).collect();
        (rows, s.iterate().to_vec())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn naive_aggregate_is_table_mean(seed in 0u64..1000, b in 1usize..10, steps in 1usize..60) {
        let p = make_quadratic_pl(4, 0.1, 1.0, 10, 0.7, seed).unwrap();
        let c = SledgeConfig { eta: 0.2, b, steps, r: 0.01, option: InitOption::Minibatch, seed };
        let mut s = init_estimator(&p, &[0.5; 4], &c, Mode::Naive).unwrap();
        for _ in 0..steps {
            sledge_step(&mut s, &p, &c).unwrap();
            let mean = naive_mean(&s);
            prop_assert_eq!(s.aggregate(), mean.as_slice());
        }
    }

    #[test]
    fn modes_agree_on_random_quadratics(
        seed in 0u64..1000,
        n in 2usize..30,
        b_frac in 0.0f64..1.0,
        r in 0.0f64..0.1,
    ) {
        let b = 1 + ((n - 1) as f64 * b_frac) as usize;
        let p = make_quadratic_pl(3, 0.2, 1.0, n, 0.9, seed).unwrap();
        let c = SledgeConfig { eta: 0.3, b, steps: 120, r, option: InitOption::Full, seed };
        let mut a = init_estimator(&p, &[1.0; 3], &c, Mode::Naive).unwrap();
        let mut e = init_estimator(&p, &[1.0; 3], &c, Mode::Efficient).unwrap();
        for _ in 0..120 {
            sledge_step(&mut a, &p, &c).unwrap();
            sledge_step(&mut e, &p, &c).unwrap();
            prop_assert!(vector::rel_err(e.aggregate(), a.aggregate()) <= 1e-10);
            prop_assert!(vector::rel_err(&e.materialized_mean(), a.aggregate()) <= 1e-10);
        }
    }

    #[test]
    fn invalid_configs_rejected(b in 0usize..40, eta in -1.0f64..1.0, r in -1.0f64..1.0) {
        let c = SledgeConfig { eta, b, steps: 1, r, option: InitOption::Full, seed: 0 };
        let ok = (1..=20).contains(&b) && eta > 0.0 && r >= 0.0;
        prop_assert_eq!(c.validate(20).is_ok(), ok);
    }
}
