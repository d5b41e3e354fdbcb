use dualstop::budget::{budget_f, hoeffding_count};
use dualstop::exact::exact_levels;
use dualstop::max_pricing::estimate_hk_minus;
use dualstop::nested::{estimate_hk, estimate_opt_min, estimate_zk, predict_hk_calls, predict_zk_calls};
use dualstop::tree::RandomTreeConfig;
use dualstop::{
    builtin, Error, ExpansionOptions, FiniteTreeProcess, Framework, InnerScheme, PathPrefix, PracticalCounts,
    SampleBudget, StoppingProblem, StreamKey,
};

fn strict(eps: f64, delta: f64) -> SampleBudget {
    SampleBudget::strict(eps, delta).unwrap()
}

fn practical(scheme: InnerScheme, outer: Vec<usize>, inner: Vec<usize>) -> SampleBudget {
    SampleBudget::practical(0.1, 0.1, PracticalCounts::new(scheme, outer, inner).unwrap()).unwrap()
}

fn constant_tree(c: f64) -> StoppingProblem {
    let t = FiniteTreeProcess::random(&mut StreamKey::master(0).rng(), &RandomTreeConfig::default());
    let t = t.with_payouts(vec![c; t.len()]).unwrap();
    StoppingProblem::from_tree("constant", t, Framework::Minimize)
}

fn opts() -> ExpansionOptions {
    ExpansionOptions::default()
}

#[test]
fn budget_examples() {
    assert_eq!(hoeffding_count(0.1, 0.05).unwrap(), 185);
    assert_eq!(budget_f(1, 0.3, 0.2, 7).unwrap(), 1.0);
    let f2 = budget_f(2, 0.1, 0.05, 4).unwrap();
    assert!((f2 / 4.61e5 - 1.0).abs() < 0.01, "{f2}");
    assert!(hoeffding_count(1.0, 0.5).is_err());
    assert!(hoeffding_count(0.5, 0.0).is_err());
}

#[test]
fn first_level_is_the_payout_without_simulation() {
    let p = builtin("iid_uniform(3)").unwrap();
    let prefix = PathPrefix::scalar(&[0.8, 0.35]);
    for b in [strict(0.01, 0.01), practical(InnerScheme::Nested, vec![10], vec![10])] {
        let e = estimate_zk(&p, 1, &prefix, &b, opts(), &StreamKey::master(1)).unwrap();
        assert_eq!(e.value, 0.35);
        assert_eq!(e.calls, 0);
    }
}

#[test]
fn second_level_two_point_coverage() {
    let p = builtin("two_point(2)").unwrap();
    let prefix = PathPrefix::scalar(&[0.5]);
    let hits = (0..100)
        .filter(|&s| {
            let e = estimate_zk(&p, 2, &prefix, &strict(0.1, 0.1), opts(), &StreamKey::master(s)).unwrap();
            (e.value - 0.25).abs() <= 0.1
        })
        .count();
    assert!(hits >= 90, "{hits}");
}

#[test]
fn constant_payouts_vanish_after_first_level() {
    let p = constant_tree(0.4);
    let prefix = PathPrefix::scalar(&[0.0]);
    let e = estimate_zk(&p, 2, &prefix, &strict(0.2, 0.2), opts(), &StreamKey::master(2)).unwrap();
    assert!(e.value.abs() <= 1e-12);
    let b = practical(InnerScheme::Nested, vec![20, 20, 20], vec![5, 5]);
    let e = estimate_zk(&p, 3, &prefix, &b, opts(), &StreamKey::master(2)).unwrap();
    assert!(e.value.abs() <= 1e-12);

    let e = estimate_hk(&p, 1, &strict(0.05, 0.05), opts(), &StreamKey::master(3)).unwrap();
    assert!((e.value - 0.4).abs() < 1e-12);
}

#[test]
fn first_term_two_point_coverage() {
    // coverage calibration: failure rate at most delta + 3 sqrt(delta/100)
    let p = builtin("two_point(2)").unwrap();
    let misses = (0..100)
        .filter(|&s| {
            let e = estimate_hk(&p, 1, &strict(0.05, 0.05), opts(), &StreamKey::master(s)).unwrap();
            (e.value - 0.25).abs() > 0.05
        })
        .count();
    assert!(misses as f64 / 100.0 <= 0.05 + 3.0 * (0.05f64 / 100.0).sqrt(), "{misses}");
}

#[test]
fn first_term_iid_uniform_practical() {
    let p = builtin("iid_uniform(3)").unwrap();
    let b = practical(InnerScheme::Nested, vec![100_000], vec![1]);
    let hits = (0..100)
        .filter(|&s| {
            let e = estimate_hk(&p, 1, &b, opts(), &StreamKey::master(s)).unwrap();
            (e.value - 0.25).abs() <= 0.01
        })
        .count();
    assert!(hits >= 95, "{hits}");
}

#[test]
fn strict_call_accounting_matches_recursion() {
    fn calls(k: usize, eps: f64, delta: f64, t: usize) -> u64 {
        if k == 1 {
            return 0;
        }
        let n = hoeffding_count(eps / 4.0, delta / 4.0).unwrap();
        let inner = calls(k - 1, eps / 4.0, delta / (4.0 * n as f64 * t as f64), t);
        n * (1 + t as u64 * inner) + calls(k - 1, eps / 2.0, delta / 2.0, t)
    }
    let p = builtin("two_point(2)").unwrap();
    for (k, eps, delta) in [(2, 0.3, 0.2), (2, 0.6, 0.5), (3, 0.9, 0.9)] {
        let e = estimate_zk(&p, k, &PathPrefix::scalar(&[0.5]), &strict(eps, delta), opts(), &StreamKey::master(4)).unwrap();
        assert_eq!(e.calls, calls(k, eps, delta, 2));
        assert!(e.calls as f64 <= budget_f(k, eps, delta, 2).unwrap());
        let predicted = predict_zk_calls(&p, k, 1, &strict(eps, delta), opts()).unwrap();
        assert_eq!(predicted, e.calls as f64);
    }
}

#[test]
fn ceiling_refuses_before_running() {
    let p = builtin("two_point(2)").unwrap();
    let b = strict(0.1, 0.1).with_max_calls(Some(1000));
    let predicted = predict_hk_calls(&p, 2, &b, opts()).unwrap();
    assert!(predicted > 1000.0);
    match estimate_hk(&p, 2, &b, opts(), &StreamKey::master(5)) {
        Err(Error::BudgetCeiling { predicted: got, ceiling }) => {
            assert_eq!(ceiling, 1000);
            assert_eq!(got, predicted);
        }
        other => panic!("{other:?}"),
    }
    // the full-value strict run at eps = 0.3 is far out of reach
    let b = strict(0.3, 0.1).with_max_calls(Some(100_000_000));
    assert!(matches!(
        estimate_opt_min(&p, &b, None, &StreamKey::master(5)),
        Err(Error::BudgetCeiling { .. })
    ));
}

#[test]
fn strict_mode_rejects_unnormalized_problems() {
    let p = builtin("robbins(3)").unwrap();
    assert!(estimate_hk(&p, 1, &strict(0.1, 0.1), opts(), &StreamKey::master(6)).is_err());
}

#[test]
fn practical_opt_min_on_small_problems() {
    // two_point(2) has OPT = 1/2
    let p = builtin("two_point(2)").unwrap();
    let b = practical(InnerScheme::Tree, vec![20_000, 5_000, 2_000], vec![16]);
    let e = estimate_opt_min(&p, &b, None, &StreamKey::master(7)).unwrap();
    assert!((e.value - 0.5).abs() <= 0.3);
    assert_eq!(e.levels.len(), 3);

    // one period: the first level is everything
    let t = FiniteTreeProcess::two_period(0.3, &[(0.0, 0.5), (1.0, 0.5)]).unwrap();
    let one = FiniteTreeProcess::from_json_str(&{
        let mut spec = t.to_spec();
        spec.horizon = 1;
        spec.nodes.truncate(1);
        serde_json::to_string(&spec).unwrap()
    })
    .unwrap();
    let p = StoppingProblem::from_tree("one", one, Framework::Minimize);
    let e = estimate_opt_min(&p, &practical(InnerScheme::Nested, vec![100, 100], vec![4]), None, &StreamKey::master(8)).unwrap();
    assert!((e.value - 0.3).abs() < 1e-12);
}

#[test]
fn tree_and_nested_schemes_agree_with_exact_terms() {
    let tree = FiniteTreeProcess::random(
        &mut StreamKey::master(9).rng(),
        &RandomTreeConfig {
            horizon: 3,
            ..RandomTreeConfig::default()
        },
    );
    let lv = exact_levels(&tree, 3).unwrap();
    let p = StoppingProblem::from_tree("r", tree, Framework::Minimize);
    for scheme in [InnerScheme::Tree, InnerScheme::Nested] {
        let b = practical(scheme, vec![20_000, 4_000, 1_000], vec![24, 24]);
        let e = estimate_opt_min(&p, &b, None, &StreamKey::master(10)).unwrap();
        for l in &e.levels {
            let err = (l.value - lv.h(l.k)).abs();
            assert!(err <= 4.0 * l.std_error + 0.02, "{scheme:?} k={} {} vs {}", l.k, l.value, lv.h(l.k));
        }
    }
}

#[test]
fn complement_first_term_examples() {
    let c = constant_tree(0.3);
    let e = estimate_hk_minus(&c, 1, 2.0, &strict(0.05, 0.05), &StreamKey::master(11)).unwrap();
    assert!((e.value - (1.0 - 0.3 / 2.0)).abs() < 1e-12);
    let e = estimate_hk_minus(&c, 1, 0.2, &strict(0.05, 0.05), &StreamKey::master(11)).unwrap();
    assert_eq!(e.value, 0.0);
    assert!(estimate_hk_minus(&c, 1, 0.0, &strict(0.05, 0.05), &StreamKey::master(11)).is_err());

    let p = builtin("iid_uniform(2)").unwrap().with_framework(Framework::Maximize);
    let hits = (0..100)
        .filter(|&s| {
            let e = estimate_hk_minus(&p, 1, 1.0, &strict(0.05, 0.05), &StreamKey::master(s)).unwrap();
            (e.value - 1.0 / 3.0).abs() <= 0.05
        })
        .count();
    assert!(hits >= 95, "{hits}");
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let p = builtin("iid_uniform(4)").unwrap();
    let runs: Vec<String> = [1, 3]
        .into_iter()
        .flat_map(|w| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap();
            let p = &p;
            pool.install(move || {
                [InnerScheme::Tree, InnerScheme::Nested].map(|s| {
                    let b = practical(s, vec![3000, 500], vec![6]);
                    serde_json::to_string(&estimate_opt_min(p, &b, None, &StreamKey::master(12)).unwrap()).unwrap()
                })
            })
        })
        .collect();
    assert_eq!(runs[0], runs[2]);
    assert_eq!(runs[1], runs[3]);
}
