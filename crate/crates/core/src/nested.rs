//! Nested Monte Carlo estimators of `Z^k_t`, `H_k` and `OPT`.
//!
//! Two inner schemes are available. The nested scheme is the plain
//! recursion: every conditional expectation inside an outer sample gets its
//! own independent inner loop, so level `k` costs a product of `k` loop
//! counts. The tree scheme samples one scenario tree per outer draw and runs
//! the exact expansion on it; every level then shares the same tree and
//! the cost grows linearly in `k` (at the price of a downward bias).

use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{hoeffding_count_f64, BudgetMode, InnerScheme, PracticalCounts, SampleBudget};
use crate::error::{Error, Result};
use crate::exact::{step, t_eta};
use crate::process::{PathPrefix, StoppingProblem};
use crate::rng::{StreamKey, StreamRng};
use crate::stats::{mean_se, pairwise_sum, variance};
use crate::tree::{Arena, NONE};

/// Map applied to the payout before expanding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    Identity,
    /// `1 - min(U, Z) / U`, the normalized complement used for maximization.
    Complement { u: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct ExpansionOptions {
    pub transform: Transform,
    /// Minima run over `[1, min_horizon]`; `None` means the full horizon.
    pub min_horizon: Option<usize>,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            transform: Transform::Identity,
            min_horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelEstimate {
    pub k: usize,
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub eps: f64,
    pub delta: f64,
    pub mode: &'static str,
    pub calls: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelEstimate>,
}

#[derive(Clone, Copy)]
enum Plan<'a> {
    Strict,
    Practical(&'a PracticalCounts),
}

pub(crate) struct Engine<'a> {
    problem: &'a StoppingProblem,
    transform: Transform,
    h: usize,
    plan: Plan<'a>,
    d: usize,
    big_t: usize,
}

#[derive(Default)]
struct Scratch {
    path: Vec<Vec<f64>>,
    mins: Vec<Vec<f64>>,
}

impl Scratch {
    fn ensure(&mut self, k: usize) {
        if self.path.len() <= k {
            self.path.resize_with(k + 1, Vec::new);
            self.mins.resize_with(k + 1, Vec::new);
        }
    }
}

fn to_count(n: f64) -> Result<usize> {
    if n > 1e15 {
        return Err(Error::TooLarge(format!("loop count {n:e}")));
    }
    Ok(n as usize)
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        problem: &'a StoppingProblem,
        budget: &'a SampleBudget,
        opts: ExpansionOptions,
    ) -> Result<Self> {
        let big_t = problem.horizon();
        let h = opts.min_horizon.unwrap_or(big_t);
        if h == 0 || h > big_t {
            return Err(Error::arg(format!("minimum horizon {h} outside [1, {big_t}]")));
        }
        let plan = match &budget.mode {
            BudgetMode::Strict => {
                let normalized = problem.is_normalized()
                    || matches!(opts.transform, Transform::Complement { .. });
                if !normalized {
                    return Err(Error::arg(
                        "strict budgets need a payout in [0, 1]; normalize it or use practical mode",
                    ));
                }
                Plan::Strict
            }
            BudgetMode::Practical(c) => Plan::Practical(c),
        };
        if let Transform::Complement { u } = opts.transform {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::arg(format!("truncation level must be positive, got {u}")));
            }
        }
        Ok(Engine {
            problem,
            transform: opts.transform,
            h,
            plan,
            d: problem.dim(),
            big_t,
        })
    }

    fn scheme(&self) -> InnerScheme {
        match self.plan {
            Plan::Strict => InnerScheme::Nested,
            Plan::Practical(c) => c.scheme,
        }
    }

    #[inline]
    fn payout(&self, t: usize, path: &[f64]) -> Result<f64> {
        let z = self.problem.payout_at(t, path)?;
        Ok(match self.transform {
            Transform::Identity => z,
            Transform::Complement { u } => 1.0 - z.min(u) / u,
        })
    }

    /// Loop count of one call to the level-`k` conditional estimator, `k >= 2`.
    fn b_count(&self, k: usize, eps: f64, delta: f64) -> Result<f64> {
        match self.plan {
            Plan::Strict => hoeffding_count_f64(eps / 4.0, delta / 4.0),
            Plan::Practical(c) => Ok(c.inner_at(k - 2) as f64),
        }
    }

    fn h_count(&self, k: usize, eps: f64, delta: f64) -> Result<f64> {
        match self.plan {
            Plan::Strict => hoeffding_count_f64(eps / 2.0, delta / 2.0),
            Plan::Practical(c) => Ok(c.outer_for(k) as f64),
        }
    }

    /// Base-simulator calls made by one nested-scheme call of level `k`;
    /// infinite once past any plausible ceiling.
    fn predict_b(&self, k: usize, eps: f64, delta: f64) -> Result<f64> {
        const LIMIT: f64 = 1e18;
        if k <= 1 {
            return Ok(0.0);
        }
        let h = self.h as f64;
        if let Plan::Practical(c) = self.plan {
            // counts do not depend on the accuracy, so the recursion is linear
            let mut calls = 0.0;
            for j in 2..=k {
                calls = c.inner_at(j - 2) as f64 * (1.0 + h * calls) + calls;
            }
            return Ok(calls);
        }
        let n = self.b_count(k, eps, delta)?;
        let inner = self.predict_b(k - 1, eps / 4.0, delta / (4.0 * n * self.big_t as f64))?;
        let own = n * (1.0 + h * inner);
        if !(own <= LIMIT) {
            return Ok(f64::INFINITY);
        }
        // the A3 call runs at looser accuracy, so it costs at most `inner`
        let a3 = self.predict_b(k - 1, eps / 2.0, delta / 2.0)?;
        Ok(own + a3)
    }

    fn predict_h_nested(&self, k: usize, eps: f64, delta: f64) -> Result<f64> {
        let n = self.h_count(k, eps, delta)?;
        let inner = self.predict_b(k, eps / 2.0, delta / (2.0 * n * self.big_t as f64))?;
        Ok(n * (1.0 + self.h as f64 * inner))
    }

    fn branching(&self, depth: usize) -> usize {
        match self.plan {
            Plan::Practical(c) => c.inner_at(depth - 1),
            Plan::Strict => 1,
        }
    }

    /// Fresh nodes below one node at `depth` in a sampled tree.
    fn fresh_subtree_size(&self, depth: usize) -> f64 {
        let mut size = 0.0;
        let mut width = 1.0;
        for d in depth..self.h {
            width *= self.branching(d) as f64;
            size += width;
        }
        size
    }

    /// Draws `B(0, empty)` and then `min_j B^{k}(j, .)` over `j <= h`: one
    /// outer sample of the level-`k` expectation.
    fn outer_sample(
        &self,
        k: usize,
        t: usize,
        path: &mut [f64],
        eps: f64,
        delta: f64,
        key: &StreamKey,
        s: &mut Scratch,
        calls: &mut u64,
    ) -> Result<f64> {
        self.problem
            .complete_until(path, t, self.h, &mut key.rng())?;
        *calls += 1;
        let mut mn = f64::INFINITY;
        if k == 1 {
            for j in 1..=self.h {
                mn = mn.min(self.payout(j, &path[..self.d * j])?);
            }
            return Ok(mn);
        }
        for j in 1..=self.h {
            let v = self.zk(k, j, &path[..self.d * j], eps, delta, &key.child(j as u64), s, calls)?;
            mn = mn.min(v);
        }
        Ok(mn)
    }

    /// `Z^2_t` once the minimum window has been observed: every inner draw
    /// of `B^2` would see the same minimum, so it is taken once. The loop
    /// still counts as `n` simulator calls.
    fn settled_z2(&self, t: usize, gamma: &[f64]) -> Result<f64> {
        let mut mn = f64::INFINITY;
        for j in 1..=self.h {
            mn = mn.min(self.payout(j, &gamma[..self.d * j])?);
        }
        Ok(self.payout(t, gamma)? - mn)
    }

    /// Nested-scheme `B^k(t, gamma, eps, delta)`.
    fn zk(
        &self,
        k: usize,
        t: usize,
        gamma: &[f64],
        eps: f64,
        delta: f64,
        key: &StreamKey,
        s: &mut Scratch,
        calls: &mut u64,
    ) -> Result<f64> {
        if k == 1 {
            return self.payout(t, gamma);
        }
        let n = to_count(self.b_count(k, eps, delta)?)?;
        if k == 2 && t >= self.h {
            *calls += n as u64;
            return self.settled_z2(t, gamma);
        }
        let (ie, id) = (eps / 4.0, delta / (4.0 * n as f64 * self.big_t as f64));
        s.ensure(k);
        let mut path = std::mem::take(&mut s.path[k]);
        let mut mins = std::mem::take(&mut s.mins[k]);
        path.resize(self.d * self.big_t, 0.0);
        path[..self.d * t].copy_from_slice(&gamma[..self.d * t]);
        mins.clear();
        let mut run = || -> Result<()> {
            for i in 0..n {
                let v = self.outer_sample(k - 1, t, &mut path, ie, id, &key.child(i as u64 + 1), s, calls)?;
                mins.push(v);
            }
            Ok(())
        };
        let res = run();
        let avg = pairwise_sum(&mins) / n as f64;
        s.path[k] = path;
        s.mins[k] = mins;
        res?;
        let a3 = self.zk(k - 1, t, gamma, eps / 2.0, delta / 2.0, &key.child(0), s, calls)?;
        Ok(a3 - avg)
    }

    /// `B^k` with its outer loop spread over the thread pool; same value as [`Self::zk`].
    fn zk_par(
        &self,
        k: usize,
        t: usize,
        gamma: &[f64],
        eps: f64,
        delta: f64,
        key: &StreamKey,
    ) -> Result<(f64, f64, u64)> {
        if k == 1 {
            return Ok((self.payout(t, gamma)?, 0.0, 0));
        }
        let n = to_count(self.b_count(k, eps, delta)?)?;
        if k == 2 && t >= self.h {
            return Ok((self.settled_z2(t, gamma)?, 0.0, n as u64));
        }
        let (ie, id) = (eps / 4.0, delta / (4.0 * n as f64 * self.big_t as f64));
        let (mins, calls) = self.par_outer(n, k - 1, t, gamma, ie, id, key, 1)?;
        let (avg, se) = mean_se(&mins);
        let (a3, se3, c3) = self.zk_par(k - 1, t, gamma, eps / 2.0, delta / 2.0, &key.child(0))?;
        Ok((a3 - avg, (se * se + se3 * se3).sqrt(), calls + c3))
    }

    #[allow(clippy::too_many_arguments)]
    fn par_outer(
        &self,
        n: usize,
        k: usize,
        t: usize,
        gamma: &[f64],
        eps: f64,
        delta: f64,
        key: &StreamKey,
        offset: u64,
    ) -> Result<(Vec<f64>, u64)> {
        let out: Vec<Result<(f64, u64)>> = (0..n)
            .into_par_iter()
            .map_init(
                || {
                    let mut path = vec![0.0; self.d * self.big_t];
                    path[..self.d * t].copy_from_slice(&gamma[..self.d * t]);
                    (Scratch::default(), path)
                },
                |(s, path), i| {
                    let mut calls = 0;
                    let v = self.outer_sample(k, t, path, eps, delta, &key.child(i as u64 + offset), s, &mut calls)?;
                    Ok((v, calls))
                },
            )
            .collect();
        let mut vals = Vec::with_capacity(n);
        let mut calls = 0;
        for r in out {
            let (v, c) = r?;
            vals.push(v);
            calls += c;
        }
        Ok((vals, calls))
    }

    /// Nested-scheme `hat B^k(eps, delta)`.
    fn hk_nested(&self, k: usize, eps: f64, delta: f64, key: &StreamKey) -> Result<(LevelEstimate, u64)> {
        let n = to_count(self.h_count(k, eps, delta)?)?;
        let id = delta / (2.0 * n as f64 * self.big_t as f64);
        let (vals, calls) = self.par_outer(n, k, 0, &[], eps / 2.0, id, key, 0)?;
        let (value, std_error) = mean_se(&vals);
        Ok((
            LevelEstimate {
                k,
                value,
                std_error,
                samples: n,
            },
            calls,
        ))
    }

    /// Grows fresh children below `parent` (at `depth`) down to depth `h`.
    fn grow(
        &self,
        tb: &mut TreeBuf,
        parent: usize,
        depth: usize,
        rng: &mut StreamRng,
    ) -> Result<()> {
        if depth >= self.h {
            return Ok(());
        }
        let b = self.branching(depth);
        let prob = 1.0 / b as f64;
        let d = self.d;
        for _ in 0..b {
            self.problem
                .complete_until(&mut tb.path, depth, depth + 1, rng)?;
            tb.calls += 1;
            let z = self.payout(depth + 1, &tb.path[..d * (depth + 1)])?;
            let c = tb.arena.push(parent, depth + 1, prob);
            tb.z.push(z);
            self.grow(tb, c, depth + 1, rng)?;
        }
        Ok(())
    }

    /// Per-level `E[min Z^k]` on one sampled tree rooted at a fresh `Y_1`.
    fn root_levels(&self, levels: usize, full: bool, key: &StreamKey, tb: &mut TreeBuf) -> Result<Vec<f64>> {
        tb.reset(self.d * self.big_t);
        let mut rng = key.rng();
        if full {
            self.problem.complete_until(&mut tb.path, 0, 1, &mut rng)?;
            tb.calls += 1;
            let z = self.payout(1, &tb.path[..self.d])?;
            tb.arena.push(NONE, 1, 1.0);
            tb.z.push(z);
            self.grow(tb, 0, 1, &mut rng)?;
        } else {
            // a single path is enough for the first level
            self.problem.complete_until(&mut tb.path, 0, self.h, &mut rng)?;
            tb.calls += 1;
            for j in 1..=self.h {
                let z = self.payout(j, &tb.path[..self.d * j])?;
                tb.arena.push(if j == 1 { NONE } else { j - 2 }, j, 1.0);
                tb.z.push(z);
            }
        }
        let n = tb.arena.len();
        tb.rm.resize(n, 0.0);
        tb.m.resize(n, 0.0);
        let mut out = Vec::with_capacity(levels);
        for _ in 0..levels {
            out.push(step(&tb.arena, &mut tb.z, &mut tb.rm, &mut tb.m, self.h));
        }
        Ok(out)
    }

    /// Tree-scheme per-root values of `E[min Z^k]`, `k = 1..=K`. Root `i`
    /// only gets the levels `k` with `i < outer[k-1]`.
    fn tree_roots(&self, levels: usize, key: &StreamKey) -> Result<TreeRun> {
        let counts: Vec<usize> = (1..=levels)
            .map(|k| self.h_count(k, 0.5, 0.5).map(|c| c as usize))
            .collect::<Result<_>>()?;
        let roots = *counts.iter().max().unwrap();
        let need: Vec<usize> = (0..roots)
            .map(|i| (1..=levels).filter(|&k| i < counts[k - 1]).max().unwrap_or(0))
            .collect();
        let out: Vec<Result<(Vec<f64>, u64)>> = (0..roots)
            .into_par_iter()
            .map_init(TreeBuf::default, |tb, i| {
                tb.calls = 0;
                let v = self.root_levels(need[i], need[i] >= 2, &key.child(i as u64), tb)?;
                Ok((v, tb.calls))
            })
            .collect();
        let mut per_root = Vec::with_capacity(roots);
        let mut calls = 0;
        for r in out {
            let (v, c) = r?;
            per_root.push(v);
            calls += c;
        }
        Ok(TreeRun {
            counts,
            per_root,
            calls,
        })
    }

    fn predict_tree_h(&self, levels: usize) -> Result<f64> {
        let mut total = 0.0;
        let counts: Vec<f64> = (1..=levels)
            .map(|k| self.h_count(k, 0.5, 0.5))
            .collect::<Result<_>>()?;
        let roots = counts.iter().cloned().fold(0.0, f64::max);
        let deep = (2..=levels).map(|k| counts[k - 1]).fold(0.0, f64::max);
        total += deep * (1.0 + self.fresh_subtree_size(1));
        total += roots - deep;
        Ok(total)
    }

    /// Tree-scheme `Z^k` at the end of an observed prefix.
    fn zk_tree(&self, k: usize, gamma: &[f64], t: usize, key: &StreamKey) -> Result<(f64, u64)> {
        if k == 1 {
            return Ok((self.payout(t, gamma)?, 0));
        }
        let d = self.d;
        let mut tb = TreeBuf::default();
        tb.reset(d * self.big_t);
        let mut rng = key.rng();
        let mut node = NONE;
        for s in 1..=t {
            tb.path[..d * s].copy_from_slice(&gamma[..d * s]);
            let z = self.payout(s, &tb.path[..d * s])?;
            // the realized branch carries no weight in the averages above it
            let prob = if s == 1 { 1.0 } else { 0.0 };
            node = tb.arena.push(node, s, prob);
            tb.z.push(z);
            self.grow(&mut tb, node, s, &mut rng)?;
        }
        let n = tb.arena.len();
        tb.rm.resize(n, 0.0);
        tb.m.resize(n, 0.0);
        for _ in 1..k {
            step(&tb.arena, &mut tb.z, &mut tb.rm, &mut tb.m, self.h);
        }
        Ok((tb.z[node], tb.calls))
    }

    fn predict_tree_z(&self, k: usize, t: usize) -> f64 {
        if k == 1 {
            return 0.0;
        }
        (1..=t).map(|s| self.fresh_subtree_size(s)).sum()
    }
}

struct TreeRun {
    counts: Vec<usize>,
    per_root: Vec<Vec<f64>>,
    calls: u64,
}

impl TreeRun {
    fn level(&self, k: usize) -> LevelEstimate {
        let n = self.counts[k - 1];
        let xs: Vec<f64> = self.per_root[..n].iter().map(|v| v[k - 1]).collect();
        let (value, std_error) = mean_se(&xs);
        LevelEstimate {
            k,
            value,
            std_error,
            samples: n,
        }
    }

    /// Standard error of the summed levels. Levels share roots, so the sum
    /// is rewritten as a sum of independent per-root contributions; roots
    /// entering the same set of levels are exchangeable and their variance
    /// is estimated group by group.
    fn sum_std_error(&self) -> f64 {
        let w: Vec<f64> = self
            .per_root
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(k, x)| x / self.counts[k] as f64)
                    .sum()
            })
            .collect();
        let mut cuts: Vec<usize> = self.counts.clone();
        cuts.push(0);
        cuts.sort_unstable();
        cuts.dedup();
        let mut var = 0.0;
        for pair in cuts.windows(2) {
            let group = &w[pair[0]..pair[1]];
            var += group.len() as f64 * variance(group);
        }
        var.sqrt()
    }
}

#[derive(Default)]
struct TreeBuf {
    arena: Arena,
    z: Vec<f64>,
    rm: Vec<f64>,
    m: Vec<f64>,
    path: Vec<f64>,
    calls: u64,
}

impl TreeBuf {
    fn reset(&mut self, path_len: usize) {
        self.arena.clear();
        self.z.clear();
        self.rm.clear();
        self.m.clear();
        self.path.clear();
        self.path.resize(path_len, 0.0);
    }
}

fn finish(
    budget: &SampleBudget,
    key: &StreamKey,
    value: f64,
    std_error: Option<f64>,
    calls: u64,
    levels: Vec<LevelEstimate>,
) -> Estimate {
    Estimate {
        value,
        std_error,
        eps: budget.eps,
        delta: budget.delta,
        mode: budget.mode_name(),
        calls,
        seed: key.seed(),
        levels,
    }
}

/// Predicted base-simulator calls of [`estimate_zk`].
pub fn predict_zk_calls(
    problem: &StoppingProblem,
    k: usize,
    t: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
) -> Result<f64> {
    let eng = Engine::new(problem, budget, opts)?;
    match eng.scheme() {
        InnerScheme::Nested => eng.predict_b(k, budget.eps, budget.delta),
        InnerScheme::Tree => Ok(eng.predict_tree_z(k, t)),
    }
}

/// Estimate of `Z^k_t` at the end of `prefix` (`t = prefix.len()`).
pub fn estimate_zk(
    problem: &StoppingProblem,
    k: usize,
    prefix: &PathPrefix,
    budget: &SampleBudget,
    opts: ExpansionOptions,
    key: &StreamKey,
) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    problem.check_prefix(prefix)?;
    let t = prefix.len();
    let eng = Engine::new(problem, budget, opts)?;
    budget.check_ceiling(predict_zk_calls(problem, k, t, budget, opts)?)?;
    let (value, se, calls) = match eng.scheme() {
        InnerScheme::Nested => {
            let (v, se, c) = eng.zk_par(k, t, prefix.values(), budget.eps, budget.delta, key)?;
            (v, Some(se), c)
        }
        InnerScheme::Tree => {
            let (v, c) = eng.zk_tree(k, prefix.values(), t, key)?;
            (v, None, c)
        }
    };
    Ok(finish(budget, key, value, se, calls, Vec::new()))
}

fn level_accuracy(budget: &SampleBudget, levels: usize) -> (f64, f64) {
    match budget.mode {
        BudgetMode::Strict => strict_level_accuracy(budget, levels),
        BudgetMode::Practical(_) => (budget.eps, budget.delta),
    }
}

/// Predicted base-simulator calls of [`estimate_expansion`] over `levels` levels.
pub fn predict_expansion_calls(
    problem: &StoppingProblem,
    levels: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
) -> Result<f64> {
    predict_expansion_calls_at(problem, levels, budget, opts, level_accuracy(budget, levels))
}

/// As [`predict_expansion_calls`] with every level run at accuracy `acc`.
pub fn predict_expansion_calls_at(
    problem: &StoppingProblem,
    levels: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
    acc: (f64, f64),
) -> Result<f64> {
    let eng = Engine::new(problem, budget, opts)?;
    match eng.scheme() {
        InnerScheme::Nested => {
            let mut total = 0.0;
            for k in 1..=levels {
                total += eng.predict_h_nested(k, acc.0, acc.1)?;
                if !total.is_finite() {
                    break;
                }
            }
            Ok(total)
        }
        InnerScheme::Tree => eng.predict_tree_h(levels),
    }
}

/// Predicted calls of [`estimate_hk`].
pub fn predict_hk_calls(
    problem: &StoppingProblem,
    k: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
) -> Result<f64> {
    let eng = Engine::new(problem, budget, opts)?;
    match eng.scheme() {
        InnerScheme::Nested => eng.predict_h_nested(k, budget.eps, budget.delta),
        InnerScheme::Tree => eng.predict_tree_h(k),
    }
}

/// Estimate of `H_k = E[min_t Z^k_t]`.
pub fn estimate_hk(
    problem: &StoppingProblem,
    k: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
    key: &StreamKey,
) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let eng = Engine::new(problem, budget, opts)?;
    budget.check_ceiling(predict_hk_calls(problem, k, budget, opts)?)?;
    let (lv, calls) = match eng.scheme() {
        InnerScheme::Nested => eng.hk_nested(k, budget.eps, budget.delta, key)?,
        InnerScheme::Tree => {
            let run = eng.tree_roots(k, key)?;
            (run.level(k), run.calls)
        }
    };
    Ok(finish(budget, key, lv.value, Some(lv.std_error), calls, vec![lv]))
}

/// Per-level accuracy of the strict full-value estimator with `levels` levels.
fn strict_level_accuracy(budget: &SampleBudget, levels: usize) -> (f64, f64) {
    let l = levels as f64;
    (budget.eps / (2.0 * l), budget.delta / l)
}

/// Number of levels used by the strict full-value estimator.
pub fn strict_levels(eps: f64) -> usize {
    (2.0 / eps).ceil() as usize
}

/// Sum of the first `levels` estimated expansion terms, floored at 0.
///
/// In strict mode each level runs at `(eps/(2L), delta/L)`.
pub fn estimate_expansion(
    problem: &StoppingProblem,
    levels: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
    key: &StreamKey,
) -> Result<Estimate> {
    estimate_expansion_at(problem, levels, budget, opts, level_accuracy(budget, levels), key)
}

/// As [`estimate_expansion`] with every level run at accuracy `acc`.
pub fn estimate_expansion_at(
    problem: &StoppingProblem,
    levels: usize,
    budget: &SampleBudget,
    opts: ExpansionOptions,
    acc: (f64, f64),
    key: &StreamKey,
) -> Result<Estimate> {
    if levels == 0 {
        return Err(Error::arg("need at least one level"));
    }
    let eng = Engine::new(problem, budget, opts)?;
    budget.check_ceiling(predict_expansion_calls_at(problem, levels, budget, opts, acc)?)?;
    let (per_level, calls, se) = match eng.scheme() {
        InnerScheme::Nested => {
            let mut out = Vec::with_capacity(levels);
            let mut calls = 0;
            for k in 1..=levels {
                let (lv, c) = eng.hk_nested(k, acc.0, acc.1, &key.child(k as u64))?;
                out.push(lv);
                calls += c;
            }
            let var: f64 = out.iter().map(|l| l.std_error * l.std_error).sum();
            (out, calls, var.sqrt())
        }
        InnerScheme::Tree => {
            let run = eng.tree_roots(levels, key)?;
            let out = (1..=levels).map(|k| run.level(k)).collect();
            (out, run.calls, run.sum_std_error())
        }
    };
    let total: f64 = per_level.iter().map(|l| l.value).sum();
    Ok(finish(budget, key, total.max(0.0), Some(se), calls, per_level))
}

/// Full-value estimate for the minimization framework.
///
/// Strict mode runs `ceil(2/eps)` levels at `(eps/(2L), delta/L)` each;
/// practical mode runs `levels` levels (default: one per outer count).
pub fn estimate_opt_min(
    problem: &StoppingProblem,
    budget: &SampleBudget,
    levels: Option<usize>,
    key: &StreamKey,
) -> Result<Estimate> {
    let levels = match (&budget.mode, levels) {
        (_, Some(l)) => l,
        (BudgetMode::Strict, None) => strict_levels(budget.eps),
        (BudgetMode::Practical(c), None) => c.outer.len(),
    };
    estimate_expansion(problem, levels, budget, ExpansionOptions::default(), key)
}

/// Estimate of the modified expansion value `E_k(eta)`, minima over `[1, t_eta]`.
pub fn estimate_modified(
    problem: &StoppingProblem,
    levels: usize,
    eta: f64,
    budget: &SampleBudget,
    key: &StreamKey,
) -> Result<Estimate> {
    let h = t_eta(problem.horizon(), eta)?;
    let opts = ExpansionOptions {
        transform: Transform::Identity,
        min_horizon: Some(h),
    };
    estimate_expansion(problem, levels, budget, opts, key)
}
