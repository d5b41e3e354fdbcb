//! Stopping rules: exact threshold rules on trees, the online simulation
//! rule, and Monte Carlo policy evaluation.

use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{BudgetMode, SampleBudget};
use crate::error::{Error, Result};
use crate::exact::{exact_levels, path_min_max};
use crate::nested::{estimate_zk, ExpansionOptions};
use crate::process::{PathPrefix, StoppingProblem};
use crate::rng::StreamKey;
use crate::stats::mean_se;
use crate::tree::FiniteTreeProcess;

/// Slack on thresholds so that values equal up to rounding count as hits.
const TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub t: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub stop: bool,
}

/// Stopping rule on a tree: stop at the first flagged node, or at the leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeRule {
    pub flag: Vec<bool>,
}

impl TreeRule {
    /// Nodes where the rule actually stops.
    pub fn stop_nodes(&self, tree: &FiniteTreeProcess) -> Vec<bool> {
        let n = tree.len();
        let mut stopped_above = vec![false; n];
        let mut here = vec![false; n];
        for i in 0..n {
            let above = tree.parent(i).is_some_and(|p| stopped_above[p] || here[p]);
            here[i] = !above && (self.flag[i] || tree.is_leaf(i));
            stopped_above[i] = above;
        }
        here
    }

    /// `E[X_tau]` for per-node values `x`.
    pub fn value_of(&self, tree: &FiniteTreeProcess, x: &[f64]) -> f64 {
        self.stop_nodes(tree)
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| tree.path_prob(i) * x[i])
            .sum()
    }

    pub fn value(&self, tree: &FiniteTreeProcess) -> f64 {
        self.value_of(tree, tree.payouts())
    }
}

#[derive(Clone, Debug)]
pub struct ExactPolicy {
    pub rule: TreeRule,
    pub value: f64,
}

fn require_normalized(tree: &FiniteTreeProcess) -> Result<()> {
    if tree.max_payout() > 1.0 {
        return Err(Error::arg("threshold rules need payouts in [0, 1]"));
    }
    Ok(())
}

/// Stops the first time `Z^k_t <= 1/k`.
pub fn tau_k_exact(tree: &FiniteTreeProcess, k: usize) -> Result<ExactPolicy> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    require_normalized(tree)?;
    let zk: Vec<f64> = if k == 1 {
        tree.payouts().to_vec()
    } else {
        exact_levels(tree, k - 1)?.z(k).to_vec()
    };
    let thr = 1.0 / k as f64;
    let rule = TreeRule {
        flag: zk.iter().map(|&z| z <= thr + TIE).collect(),
    };
    let value = rule.value(tree);
    Ok(ExactPolicy { rule, value })
}

/// Stops the first time `Z^{K+1}_t = Z_t - MAR_t <= tol`.
pub fn tau_star_exact(tree: &FiniteTreeProcess, levels: usize, tol: f64) -> Result<ExactPolicy> {
    if !(tol > 0.0) {
        return Err(Error::arg("tol must be positive"));
    }
    let lv = exact_levels(tree, levels)?;
    let rest = lv.z(levels + 1);
    let residual = path_min_max(tree, rest);
    if residual > tol {
        return Err(Error::ToleranceNotReached {
            k: levels,
            tol,
            residual,
            required_k: (tree.max_payout() / tol).ceil() as u64,
        });
    }
    let rule = TreeRule {
        flag: rest.iter().map(|&r| r <= tol).collect(),
    };
    let value = rule.value(tree);
    Ok(ExactPolicy { rule, value })
}

/// A rule deciding from the first `t` columns of the path only.
pub trait StoppingRule: Sync {
    fn decide(&self, problem: &StoppingProblem, prefix: &PathPrefix, key: &StreamKey) -> Result<Decision>;
}

/// Stops at a fixed time.
pub struct StopAt(pub usize);

impl StoppingRule for StopAt {
    fn decide(&self, _: &StoppingProblem, prefix: &PathPrefix, _: &StreamKey) -> Result<Decision> {
        let t = prefix.len();
        Ok(Decision {
            t,
            statistic: t as f64,
            threshold: self.0 as f64,
            stop: t >= self.0,
        })
    }
}

/// A [`TreeRule`] replayed on paths of the same tree.
pub struct TreeRulePolicy<'a> {
    pub tree: &'a FiniteTreeProcess,
    pub rule: &'a TreeRule,
}

impl StoppingRule for TreeRulePolicy<'_> {
    fn decide(&self, _: &StoppingProblem, prefix: &PathPrefix, _: &StreamKey) -> Result<Decision> {
        let t = prefix.len();
        let node = self
            .tree
            .locate(prefix.values(), t)
            .ok_or(Error::OutsideSupport { t })?;
        let flag = self.rule.flag[node];
        Ok(Decision {
            t,
            statistic: if flag { 1.0 } else { 0.0 },
            threshold: 1.0,
            stop: flag,
        })
    }
}

/// The online rule: at each `t < T`, estimate `Z^{k_eps}_t` with
/// `k_eps = ceil(4/eps)` and stop if the estimate is at most `eps/2`.
#[derive(Clone, Debug)]
pub struct TauEps {
    pub eps: f64,
    /// Strict budgets are rescaled to `(eps/4, eps/(4T))` per decision.
    pub budget: SampleBudget,
    pub opts: ExpansionOptions,
}

impl TauEps {
    pub fn new(eps: f64, budget: SampleBudget) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(TauEps {
            eps,
            budget,
            opts: ExpansionOptions::default(),
        })
    }

    pub fn level(&self) -> usize {
        (4.0 / self.eps).ceil() as usize
    }

    /// Budget of one decision on a horizon-`horizon` problem.
    pub fn decision_budget(&self, horizon: usize) -> SampleBudget {
        let mut b = self.budget.clone();
        if let BudgetMode::Strict = b.mode {
            b.eps = self.eps / 4.0;
            b.delta = self.eps / (4.0 * horizon as f64);
        }
        b
    }
}

impl StoppingRule for TauEps {
    fn decide(&self, problem: &StoppingProblem, prefix: &PathPrefix, key: &StreamKey) -> Result<Decision> {
        let t = prefix.len();
        let threshold = self.eps / 2.0;
        if t >= problem.horizon() {
            return Ok(Decision {
                t,
                statistic: f64::NAN,
                threshold,
                stop: true,
            });
        }
        let b = self.decision_budget(problem.horizon());
        let est = estimate_zk(problem, self.level(), prefix, &b, self.opts, key)?;
        Ok(Decision {
            t,
            statistic: est.value,
            threshold,
            stop: est.value <= threshold,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Episode {
    pub stop_t: usize,
    pub payout: f64,
    pub trace: Vec<Decision>,
}

/// Source of a live path, revealed one column at a time.
pub trait PathStream {
    /// The prefix `Y_1..Y_t`; `t` grows by one per call.
    fn reveal(&mut self, t: usize) -> Result<PathPrefix>;
}

/// Reveals a path sampled up front from the problem's own law.
pub struct SimulatedPath {
    full: PathPrefix,
}

impl SimulatedPath {
    pub fn new(problem: &StoppingProblem, key: &StreamKey) -> Result<Self> {
        Ok(SimulatedPath {
            full: problem.sample_path(&PathPrefix::empty(problem.dim()), key)?,
        })
    }
}

impl PathStream for SimulatedPath {
    fn reveal(&mut self, t: usize) -> Result<PathPrefix> {
        Ok(self.full.truncated(t))
    }
}

/// Runs one episode of `rule` on a live path. A failed decision aborts the
/// episode with the decisions taken so far.
pub fn run_episode(
    problem: &StoppingProblem,
    rule: &dyn StoppingRule,
    stream: &mut dyn PathStream,
    key: &StreamKey,
) -> Result<Episode> {
    let mut trace = Vec::new();
    for t in 1..=problem.horizon() {
        let prefix = stream.reveal(t)?;
        if prefix.len() != t {
            return Err(Error::arg("path stream revealed the wrong number of columns"));
        }
        let mut d = match rule.decide(problem, &prefix, &key.child(t as u64)) {
            Ok(d) => d,
            Err(e) => {
                return Err(Error::PolicyAborted {
                    t,
                    trace,
                    source: Box::new(e),
                })
            }
        };
        if t == problem.horizon() {
            d.stop = true;
        }
        let stop = d.stop;
        trace.push(d);
        if stop {
            let payout = problem.payout_at(t, prefix.values())?;
            return Ok(Episode {
                stop_t: t,
                payout,
                trace,
            });
        }
    }
    unreachable!("the last period always stops")
}

/// Online rule of the construction on a live path.
pub fn tau_eps_online(
    problem: &StoppingProblem,
    eps: f64,
    stream: &mut dyn PathStream,
    budget: &SampleBudget,
    key: &StreamKey,
) -> Result<Episode> {
    let rule = TauEps::new(eps, budget.clone())?;
    run_episode(problem, &rule, stream, key)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
    pub mean_stop_time: f64,
    pub seed: u64,
}

/// Monte Carlo value of `rule` over independent simulated episodes.
/// Episode `i` draws its path from `key.child(2i)` and its decisions from
/// `key.child(2i+1)`.
pub fn evaluate_policy(
    problem: &StoppingProblem,
    rule: &dyn StoppingRule,
    episodes: usize,
    key: &StreamKey,
) -> Result<(PolicyEvaluation, Vec<Episode>)> {
    if episodes == 0 {
        return Err(Error::arg("need at least one episode"));
    }
    let runs: Vec<Result<Episode>> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let mut stream = SimulatedPath::new(problem, &key.child(2 * i))?;
            run_episode(problem, rule, &mut stream, &key.child(2 * i + 1))
        })
        .collect();
    let runs: Vec<Episode> = runs.into_iter().collect::<Result<_>>()?;
    let pay: Vec<f64> = runs.iter().map(|e| e.payout).collect();
    let times: Vec<f64> = runs.iter().map(|e| e.stop_t as f64).collect();
    let (mean, std_error) = mean_se(&pay);
    Ok((
        PolicyEvaluation {
            mean,
            std_error,
            episodes,
            mean_stop_time: crate::stats::mean(&times),
            seed: key.seed(),
        },
        runs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::backward_induction;
    use crate::process::{builtin, Framework};
    use crate::tree::{RandomTreeConfig, TreeBuilder};

    #[test]
    fn two_point_tau_2_stops_at_once() {
        let t = FiniteTreeProcess::two_point(2.0).unwrap();
        let p = tau_k_exact(&t, 2).unwrap();
        assert!(p.rule.flag[0]);
        assert_eq!(p.value, 0.5);
        let p = tau_star_exact(&t, 40, 1e-9).unwrap();
        assert!((p.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn not_sure_tree_stops_immediately() {
        let t = FiniteTreeProcess::not_sure_example();
        for k in 1..6 {
            let p = tau_k_exact(&t, k).unwrap();
            assert_eq!(p.value, 0.0);
            assert!(p.rule.stop_nodes(&t)[0]);
        }
    }

    #[test]
    fn single_path_tree_stops_at_argmin() {
        let mut b = TreeBuilder::new(1, 4);
        let mut prev = b.root(&[0.0], 1.0, 0.7);
        for (i, z) in [0.4, 0.2, 0.9].into_iter().enumerate() {
            prev = b.child(prev, &[i as f64], 1.0, z);
        }
        let t = b.build().unwrap();
        let p = tau_star_exact(&t, 50, 1e-9).unwrap();
        let stop = p.rule.stop_nodes(&t);
        assert!(stop[2]);
        assert_eq!(p.value, 0.2);
    }

    #[test]
    fn good1_identity_on_random_rules() {
        let key = StreamKey::master(41);
        for i in 0..30 {
            let t = FiniteTreeProcess::random(&mut key.child(i).rng(), &RandomTreeConfig::default());
            let lv = exact_levels(&t, 8).unwrap();
            let mut rng = key.child(1000 + i).rng();
            let rule = TreeRule {
                flag: (0..t.len()).map(|_| rand::Rng::random_bool(&mut rng, 0.4)).collect(),
            };
            for k in 1..=8 {
                let lhs = rule.value(&t);
                let rhs = rule.value_of(&t, lv.z(k)) + lv.e(k - 1);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replayed_rules_match_exact_values() {
        let key = StreamKey::master(43);
        let t = FiniteTreeProcess::random(&mut key.rng(), &RandomTreeConfig::default());
        let prob = StoppingProblem::from_tree("t", t.clone(), Framework::Minimize);
        let dp = backward_induction(&t, Framework::Minimize).unwrap();
        let rule = TreeRule { flag: dp.stop.clone() };
        let pol = TreeRulePolicy { tree: &t, rule: &rule };
        let (ev, _) = evaluate_policy(&prob, &pol, 20_000, &key.child(1)).unwrap();
        assert!((ev.mean - dp.opt).abs() <= 3.0 * ev.std_error + 1e-12);

        let u = builtin("iid_uniform(3)").unwrap();
        let (ev, _) = evaluate_policy(&u, &StopAt(1), 20_000, &key.child(2)).unwrap();
        assert!((ev.mean - 0.5).abs() <= 3.0 * ev.std_error);
    }
}
