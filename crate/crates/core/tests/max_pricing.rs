use dualstop::max_pricing::{
    complement_payouts, estimate_max_moments, estimate_opt_max, exact_max_moments, max_relative_error_bound,
    paley_zygmund_floor, truncation_gap_bound, truncation_level, MaxMoments,
};
use dualstop::oracles::backward_induction;
use dualstop::tree::RandomTreeConfig;
use dualstop::{builtin, FiniteTreeProcess, Framework, InnerScheme, PracticalCounts, SampleBudget, StoppingProblem, StreamKey};

fn within(x: f64, want: f64, se: f64) -> bool {
    (x - want).abs() <= 3.0 * se
}

#[test]
fn moments_of_two_uniforms() {
    let p = builtin("iid_uniform(2)").unwrap().with_framework(Framework::Maximize);
    let m = estimate_max_moments(&p, 100_000, &StreamKey::master(1)).unwrap();
    assert!(within(m.m1, 2.0 / 3.0, m.se_m1), "{m:?}");
    assert!(within(m.m2, 0.5, m.se_m2), "{m:?}");
    assert!((m.gamma0() - 9.0 / 8.0).abs() < 0.01);
    assert_eq!(m.samples, 100_000);
}

#[test]
fn moments_of_one_uniform() {
    let p = builtin("iid_uniform(1)").unwrap().with_framework(Framework::Maximize);
    let m = estimate_max_moments(&p, 100_000, &StreamKey::master(2)).unwrap();
    assert!(within(m.m1, 0.5, m.se_m1));
    assert!(within(m.m2, 1.0 / 3.0, m.se_m2));
    assert!((m.gamma0() - 4.0 / 3.0).abs() < 0.02);
}

#[test]
fn moments_of_constants_and_zeros() {
    let t = FiniteTreeProcess::two_point(2.0).unwrap();
    let c = t.with_payouts(vec![0.7; t.len()]).unwrap();
    let m = exact_max_moments(&c).unwrap();
    assert!((m.m1 - 0.7).abs() < 1e-15 && (m.m2 - 0.49).abs() < 1e-15);
    assert!((m.gamma0() - 1.0).abs() < 1e-12);
    let p = StoppingProblem::from_tree("c", c, Framework::Maximize);
    let m = estimate_max_moments(&p, 100, &StreamKey::master(3)).unwrap();
    assert!((m.gamma0() - 1.0).abs() < 1e-12);

    let z = t.with_payouts(vec![0.0; t.len()]).unwrap();
    assert!(exact_max_moments(&z).is_err());
    let p = StoppingProblem::from_tree("z", z, Framework::Maximize);
    assert!(estimate_max_moments(&p, 100, &StreamKey::master(3)).is_err());
    assert!(estimate_max_moments(&p, 1, &StreamKey::master(3)).is_err());
}

#[test]
fn truncation_level_examples() {
    let tr = truncation_level(&MaxMoments::exact(1.0, 1.0).unwrap(), 0.1).unwrap();
    assert!((tr.u0 - 1e6).abs() < 1e-6);
    assert_eq!(tr.k0, 1e9);
    let tr = truncation_level(&MaxMoments::exact(2.0 / 3.0, 0.5).unwrap(), 0.5).unwrap();
    let want = 1e4 * (9.0f64 / 8.0).powi(3) * 4.0 * (2.0 / 3.0);
    assert!((tr.u0 - want).abs() < 1e-6);
    assert!((tr.u0 - 3.80e4).abs() < 100.0);
    let tr = truncation_level(&MaxMoments::exact(1.0, 1.0).unwrap(), 1.0 - 1e-12).unwrap();
    assert!((tr.u0 - 1e4).abs() < 1e-6);
    assert!(truncation_level(&MaxMoments::exact(1.0, 1.0).unwrap(), 1.0).is_err());
}

fn practical(outer: Vec<usize>, inner: Vec<usize>) -> SampleBudget {
    SampleBudget::practical(0.1, 0.1, PracticalCounts::new(InnerScheme::Tree, outer, inner).unwrap()).unwrap()
}

#[test]
fn constant_payout_is_recovered_exactly() {
    let t = FiniteTreeProcess::random(&mut StreamKey::master(4).rng(), &RandomTreeConfig::default());
    let t = t.with_payouts(vec![2.5; t.len()]).unwrap();
    let m = exact_max_moments(&t).unwrap();
    let p = StoppingProblem::from_tree("c", t, Framework::Maximize);
    let e = estimate_opt_max(&p, &m, &practical(vec![50], vec![1]), Some(4.0), Some(1), &StreamKey::master(5)).unwrap();
    assert!((e.value - 2.5).abs() < 1e-12, "{}", e.value);
}

#[test]
fn max_value_is_u_minus_min_value_of_the_reflection() {
    let key = StreamKey::master(6);
    for i in 0..30 {
        let t = FiniteTreeProcess::random(
            &mut key.child(i).rng(),
            &RandomTreeConfig {
                scale: 5.0,
                ..RandomTreeConfig::default()
            },
        );
        let u = t.max_payout() + i as f64 * 0.1;
        let reflected = t.with_payouts(t.payouts().iter().map(|z| u - z).collect()).unwrap();
        let max = backward_induction(&t, Framework::Maximize).unwrap().opt;
        let min = backward_induction(&reflected, Framework::Minimize).unwrap().opt;
        assert!((max - (u - min)).abs() < 1e-12);
    }
}

#[test]
fn practical_estimate_on_a_tree_matches_the_oracle() {
    let t = FiniteTreeProcess::random(
        &mut StreamKey::master(7).rng(),
        &RandomTreeConfig {
            horizon: 3,
            scale: 3.0,
            ..RandomTreeConfig::default()
        },
    );
    let opt = backward_induction(&t, Framework::Maximize).unwrap().opt;
    let m = exact_max_moments(&t).unwrap();
    let u = t.max_payout();
    let p = StoppingProblem::from_tree("r", t, Framework::Maximize);
    let e = estimate_opt_max(&p, &m, &practical(vec![40_000], vec![24]), Some(u), Some(30), &StreamKey::master(8)).unwrap();
    let se = e.std_error.unwrap();
    // truncating at the max payout is lossless; the rest is the tail 1/(K+1) plus noise
    assert!((e.value - opt).abs() <= u / 31.0 + 4.0 * se, "{} vs {opt}", e.value);
    assert_eq!(e.levels, 30);
    assert!(e.relative_bound > 0.0);
}

#[test]
fn reported_bound_uses_moment_errors() {
    let m = MaxMoments::exact(2.0 / 3.0, 0.5).unwrap();
    let b0 = max_relative_error_bound(&m, 20.0, 40, 0.0);
    let b1 = max_relative_error_bound(&m, 20.0, 40, 0.01);
    assert!(b1 > b0);
    let r: f64 = 30.0;
    let want = 7.0 * (9.0f64 / 8.0).powf(1.5) * (r / 41.0 + r.powf(-0.5));
    assert!((b0 - want).abs() < 1e-12);
}

#[test]
fn truncation_sandwich_example() {
    let t = FiniteTreeProcess::two_period(0.25, &[(0.25, 0.5), (0.75, 0.5)]).unwrap();
    let m = exact_max_moments(&t).unwrap();
    let opt = backward_induction(&t, Framework::Maximize).unwrap().opt;
    assert!((opt - 0.5).abs() < 1e-12);
    for u in [0.3, 0.5, 1.0] {
        let comp = t.with_payouts(complement_payouts(&t, u)).unwrap();
        let sup = 1.0 - backward_induction(&comp, Framework::Minimize).unwrap().opt;
        let gap = opt - u * sup;
        assert!(gap >= -1e-12 && gap <= truncation_gap_bound(&m, u) + 1e-12);
    }
    assert!(opt >= paley_zygmund_floor(&m));
}
