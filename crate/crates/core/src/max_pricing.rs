//! Maximization through truncation: `Z` is capped at `U`, rescaled to
//! `[0, 1]` and complemented, which turns `sup E[Z_tau]` into a normalized
//! minimization problem for the nested estimators.

use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{BudgetMode, SampleBudget};
use crate::error::{Error, Result};
use crate::nested::{
    estimate_expansion, estimate_expansion_at, predict_expansion_calls_at, Estimate,
    ExpansionOptions, Transform,
};
use crate::process::StoppingProblem;
use crate::rng::StreamKey;
use crate::stats::mean_se;
use crate::tree::FiniteTreeProcess;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxMoments {
    /// `E[max_t Z_t]`.
    pub m1: f64,
    /// `E[(max_t Z_t)^2]`.
    pub m2: f64,
    pub se_m1: f64,
    pub se_m2: f64,
    pub samples: usize,
}

impl MaxMoments {
    pub fn exact(m1: f64, m2: f64) -> Result<Self> {
        let m = MaxMoments {
            m1,
            m2,
            se_m1: 0.0,
            se_m2: 0.0,
            samples: 0,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0 && self.m1.is_finite() && self.m2.is_finite()) {
            return Err(Error::arg(
                "max moments must be finite with M1 > 0 (gamma0 is undefined for an all-zero payout)",
            ));
        }
        Ok(())
    }

    /// `gamma0 = M2 / M1^2`, one plus the squared coefficient of variation of the max.
    pub fn gamma0(&self) -> f64 {
        self.m2 / (self.m1 * self.m1)
    }
}

/// Plain Monte Carlo moments of `max_t Z_t` over `n` unconditioned paths.
pub fn estimate_max_moments(problem: &StoppingProblem, n: usize, key: &StreamKey) -> Result<MaxMoments> {
    if n < 2 {
        return Err(Error::arg("need at least two samples"));
    }
    let (d, big_t) = (problem.dim(), problem.horizon());
    let maxima: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; d * big_t],
            |path, i| {
                problem.complete(path, 0, &mut key.child(i as u64).rng())?;
                let mut mx = 0.0f64;
                for t in 1..=big_t {
                    mx = mx.max(problem.payout_at(t, &path[..d * t])?);
                }
                Ok(mx)
            },
        )
        .collect();
    let xs: Vec<f64> = maxima.into_iter().collect::<Result<_>>()?;
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let (m1, se_m1) = mean_se(&xs);
    let (m2, se_m2) = mean_se(&sq);
    let m = MaxMoments {
        m1,
        m2,
        se_m1,
        se_m2,
        samples: n,
    };
    m.validate()?;
    Ok(m)
}

/// Exact moments of `max_t Z_t` on a tree.
pub fn exact_max_moments(tree: &FiniteTreeProcess) -> Result<MaxMoments> {
    let mut run = vec![0.0f64; tree.len()];
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..tree.len() {
        run[i] = match tree.parent(i) {
            None => tree.payout(i),
            Some(p) => run[p].max(tree.payout(i)),
        };
        if tree.is_leaf(i) {
            m1 += tree.path_prob(i) * run[i];
            m2 += tree.path_prob(i) * run[i] * run[i];
        }
    }
    MaxMoments::exact(m1, m2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Truncation {
    /// `U0 = 10^4 gamma0^3 eps^-2 M1`.
    pub u0: f64,
    /// `k0 = ceil((U0 / M1)^{3/2})`, as a float since it is usually enormous.
    pub k0: f64,
}

pub fn truncation_level(moments: &MaxMoments, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    moments.validate()?;
    let g = moments.gamma0();
    let u0 = 1e4 * g * g * g * moments.m1 / (eps * eps);
    Ok(Truncation {
        u0,
        k0: (u0 / moments.m1).powf(1.5).ceil(),
    })
}

/// Lower bound `(4/27) M1 / gamma0` on the maximization value.
pub fn paley_zygmund_floor(moments: &MaxMoments) -> f64 {
    4.0 / 27.0 * moments.m1 / moments.gamma0()
}

/// Bound `sqrt(M2) sqrt(M1 / U)` on the loss from truncating at `U`.
pub fn truncation_gap_bound(moments: &MaxMoments, u: f64) -> f64 {
    moments.m2.sqrt() * (moments.m1 / u).sqrt()
}

/// Relative error bound `7 gamma0^{3/2} (U/M1 ((K+1)^{-1} + |z|) + (U/M1)^{-1/2})`
/// of the truncated expansion after `K` levels, where `z` is the error of
/// the summed complement levels. Multiply by the value for an absolute bound.
pub fn max_relative_error_bound(moments: &MaxMoments, u: f64, levels: usize, z: f64) -> f64 {
    let r = u / moments.m1;
    7.0 * moments.gamma0().powf(1.5) * (r * (1.0 / (levels as f64 + 1.0) + z.abs()) + r.powf(-0.5))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxEstimate {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub u: f64,
    pub levels: usize,
    pub gamma0: f64,
    /// Relative error bound with the moment standard errors in the `|z|` term.
    pub relative_bound: f64,
    /// Expansion of the truncated complement.
    pub complement: Estimate,
}

/// Per-level accuracy used by the strict algorithm.
fn strict_max_accuracy(tr: &Truncation, m1: f64, delta: f64) -> (f64, f64) {
    let r = (tr.u0 / m1).powf(1.5) + 1.0;
    (1.0 / (r * r), delta / r)
}

/// Predicted base-simulator calls of [`estimate_opt_max`].
pub fn predict_opt_max_calls(
    problem: &StoppingProblem,
    moments: &MaxMoments,
    budget: &SampleBudget,
    u: Option<f64>,
    levels: Option<usize>,
) -> Result<f64> {
    let (u, levels, acc) = resolve(moments, budget, u, levels)?;
    let opts = ExpansionOptions {
        transform: Transform::Complement { u },
        min_horizon: None,
    };
    if levels as f64 > 1e7 {
        return Ok(f64::INFINITY);
    }
    match acc {
        Some(acc) => predict_expansion_calls_at(problem, levels, budget, opts, acc),
        None => crate::nested::predict_expansion_calls(problem, levels, budget, opts),
    }
}

fn resolve(
    moments: &MaxMoments,
    budget: &SampleBudget,
    u: Option<f64>,
    levels: Option<usize>,
) -> Result<(f64, usize, Option<(f64, f64)>)> {
    moments.validate()?;
    match &budget.mode {
        BudgetMode::Strict => {
            let tr = truncation_level(moments, budget.eps)?;
            let u = u.unwrap_or(tr.u0);
            let tr = Truncation {
                u0: u,
                k0: (u / moments.m1).powf(1.5).ceil(),
            };
            let levels = match levels {
                Some(l) => l,
                None if tr.k0 > usize::MAX as f64 / 2.0 => usize::MAX / 2,
                None => tr.k0 as usize,
            };
            Ok((u, levels, Some(strict_max_accuracy(&tr, moments.m1, budget.delta))))
        }
        BudgetMode::Practical(c) => {
            let u = match u {
                Some(u) => u,
                None => truncation_level(moments, budget.eps)?.u0,
            };
            Ok((u, levels.unwrap_or(c.outer.len()), None))
        }
    }
}

/// Maximization value `U (1 - sum_{k<=K} H^-_k)`.
///
/// Strict mode takes `U0` and `k0` from the moments unless overridden;
/// practical mode defaults `U` to `U0` and `K` to the number of outer counts.
pub fn estimate_opt_max(
    problem: &StoppingProblem,
    moments: &MaxMoments,
    budget: &SampleBudget,
    u: Option<f64>,
    levels: Option<usize>,
    key: &StreamKey,
) -> Result<MaxEstimate> {
    let (u, levels, acc) = resolve(moments, budget, u, levels)?;
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::arg(format!("truncation level must be positive, got {u}")));
    }
    if levels == 0 {
        return Err(Error::arg("need at least one level"));
    }
    budget.check_ceiling(predict_opt_max_calls(problem, moments, budget, Some(u), Some(levels))?)?;
    let opts = ExpansionOptions {
        transform: Transform::Complement { u },
        min_horizon: None,
    };
    let complement = match acc {
        Some(acc) => estimate_expansion_at(problem, levels, budget, opts, acc, key)?,
        None => estimate_expansion(problem, levels, budget, opts, key)?,
    };
    // moment errors enter the bound through z, in units of the truncated scale
    let z = (moments.se_m1 + moments.se_m2.sqrt()) / u;
    Ok(MaxEstimate {
        value: u * (1.0 - complement.value),
        std_error: complement.std_error.map(|s| u * s),
        u,
        levels,
        gamma0: moments.gamma0(),
        relative_bound: max_relative_error_bound(moments, u, levels, z),
        complement,
    })
}

/// Single level `H^-_k` of the truncated complement.
pub fn estimate_hk_minus(
    problem: &StoppingProblem,
    k: usize,
    u: f64,
    budget: &SampleBudget,
    key: &StreamKey,
) -> Result<Estimate> {
    let opts = ExpansionOptions {
        transform: Transform::Complement { u },
        min_horizon: None,
    };
    crate::nested::estimate_hk(problem, k, budget, opts, key)
}

/// Payouts of the normalized complement `1 - min(U, Z)/U` on a tree.
pub fn complement_payouts(tree: &FiniteTreeProcess, u: f64) -> Vec<f64> {
    tree.payouts().iter().map(|z| 1.0 - z.min(u) / u).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_levels;
    use crate::oracles::backward_induction;
    use crate::process::Framework;
    use crate::rng::StreamKey;
    use crate::tree::RandomTreeConfig;

    #[test]
    fn truncation_examples() {
        let m = MaxMoments::exact(1.0, 1.0).unwrap();
        let tr = truncation_level(&m, 0.1).unwrap();
        assert!((tr.u0 - 1e6).abs() < 1e-6);
        assert!((tr.k0 - 1e9).abs() < 1.0);
        let m = MaxMoments::exact(2.0 / 3.0, 0.5).unwrap();
        assert!((m.gamma0() - 9.0 / 8.0).abs() < 1e-15);
        let tr = truncation_level(&m, 0.5).unwrap();
        let want = 1e4 * (9.0f64 / 8.0).powi(3) * 4.0 * (2.0 / 3.0);
        assert!((tr.u0 / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_identity_and_sandwich_on_trees() {
        let key = StreamKey::master(31);
        for i in 0..30 {
            let cfg = RandomTreeConfig {
                scale: 3.0,
                ..Default::default()
            };
            let t = FiniteTreeProcess::random(&mut key.child(i).rng(), &cfg);
            let opt = backward_induction(&t, Framework::Maximize).unwrap().opt;
            let m = exact_max_moments(&t).unwrap();
            assert!(m.gamma0() >= 1.0 - 1e-12);
            assert!(opt >= paley_zygmund_floor(&m) - 1e-12);
            for u in [0.5, 1.5, 3.0, 10.0] {
                let trunc: Vec<f64> = t.payouts().iter().map(|z| z.min(u) / u).collect();
                let tt = t.with_payouts(trunc).unwrap();
                let sup = backward_induction(&tt, Framework::Maximize).unwrap().opt;
                let tc = t.with_payouts(complement_payouts(&t, u)).unwrap();
                let inf = backward_induction(&tc, Framework::Minimize).unwrap().opt;
                assert!((sup - (1.0 - inf)).abs() < 1e-12);
                let gap = opt - u * sup;
                assert!(gap >= -1e-12 && gap <= truncation_gap_bound(&m, u) + 1e-12);
                // the exact expansion of the complement recovers the truncated value
                let lv = exact_levels(&tc, 300).unwrap();
                assert!(u * (1.0 - lv.e(300)) >= u * sup - 1e-12);
            }
        }
    }
}
