//! Stopping problems: a process simulator paired with a payout.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{StreamKey, StreamRng};
use crate::tree::FiniteTreeProcess;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Minimize,
    Maximize,
}

impl std::str::FromStr for Framework {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "minimize" => Ok(Framework::Minimize),
            "max" | "maximize" => Ok(Framework::Maximize),
            _ => Err(Error::arg(format!("unknown framework `{s}`"))),
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Framework::Minimize => "min",
            Framework::Maximize => "max",
        })
    }
}

/// Observed values `Y_1..Y_t`, stored column by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPrefix {
    dim: usize,
    values: Vec<f64>,
}

impl PathPrefix {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::arg("prefix length is not a multiple of D"));
        }
        Ok(PathPrefix { dim, values })
    }

    pub fn empty(dim: usize) -> Self {
        PathPrefix {
            dim,
            values: Vec::new(),
        }
    }

    pub fn scalar(values: &[f64]) -> Self {
        PathPrefix {
            dim: 1,
            values: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column `s`, 1-based.
    pub fn column(&self, s: usize) -> &[f64] {
        &self.values[(s - 1) * self.dim..s * self.dim]
    }

    pub fn truncated(&self, t: usize) -> PathPrefix {
        PathPrefix {
            dim: self.dim,
            values: self.values[..t.min(self.len()) * self.dim].to_vec(),
        }
    }
}

pub trait Process: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Samples columns `t+1..=T` of `path` (length `D*T`) given its first `t`.
    fn complete(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()>;

    /// Like [`Process::complete`] when only columns up to `until` will be read.
    fn complete_until(
        &self,
        path: &mut [f64],
        t: usize,
        until: usize,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let _ = until;
        self.complete(path, t, rng)
    }
}

pub trait Payout: Send + Sync + fmt::Debug {
    /// Payout at time `t`; `path` holds at least `t` columns.
    fn eval(&self, t: usize, path: &[f64]) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub struct IidUniform {
    pub horizon: usize,
}

impl Process for IidUniform {
    fn dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn complete(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()> {
        self.complete_until(path, t, self.horizon, rng)
    }

    fn complete_until(
        &self,
        path: &mut [f64],
        t: usize,
        until: usize,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let end = until.min(self.horizon);
        if t < end {
            for y in &mut path[t..end] {
                *y = rng.random();
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SecondLaw {
    Exponential,
    /// Uniform on `[0, hi]`.
    Uniform { hi: f64 },
    /// 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
}

/// Deterministic `Y_1` followed by a random `Y_2`.
#[derive(Clone, Debug)]
pub struct TwoPeriod {
    pub first: f64,
    pub second: SecondLaw,
}

impl Process for TwoPeriod {
    fn dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        2
    }
    fn complete(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()> {
        if t == 0 {
            path[0] = self.first;
        } else if path[0] != self.first {
            return Err(Error::OutsideSupport { t: 1 });
        }
        if t < 2 {
            path[1] = match self.second {
                SecondLaw::Exponential => rng.sample(Exp1),
                SecondLaw::Uniform { hi } => hi * rng.random::<f64>(),
                SecondLaw::Bernoulli { p } => {
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
        }
        Ok(())
    }
}

impl Process for FiniteTreeProcess {
    fn dim(&self) -> usize {
        FiniteTreeProcess::dim(self)
    }
    fn horizon(&self) -> usize {
        FiniteTreeProcess::horizon(self)
    }
    fn complete(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()> {
        self.complete_path(path, t, rng)
    }
}

/// `Z_t = Y_t` (first coordinate).
#[derive(Clone, Debug)]
pub struct IdentityPayout {
    pub dim: usize,
}

impl Payout for IdentityPayout {
    #[inline]
    fn eval(&self, t: usize, path: &[f64]) -> Result<f64> {
        Ok(path[(t - 1) * self.dim])
    }
}

/// `g_t = #{i <= t : Y_i <= Y_t} + (T - t) Y_t`.
#[derive(Clone, Debug)]
pub struct RobbinsPayout {
    pub horizon: usize,
}

impl Payout for RobbinsPayout {
    fn eval(&self, t: usize, path: &[f64]) -> Result<f64> {
        let y = path[t - 1];
        let rank = path[..t].iter().filter(|&&v| v <= y).count();
        Ok(rank as f64 + (self.horizon - t) as f64 * y)
    }
}

#[derive(Clone, Debug)]
pub struct TreePayout(pub Arc<FiniteTreeProcess>);

impl Payout for TreePayout {
    fn eval(&self, t: usize, path: &[f64]) -> Result<f64> {
        self.0.payout_at(t, path)
    }
}

#[derive(Clone, Debug)]
pub struct StoppingProblem {
    name: String,
    process: Arc<dyn Process>,
    payout: Arc<dyn Payout>,
    framework: Framework,
    bound: Option<f64>,
    normalized: bool,
    tree: Option<Arc<FiniteTreeProcess>>,
}

impl StoppingProblem {
    pub fn new(
        name: impl Into<String>,
        process: Arc<dyn Process>,
        payout: Arc<dyn Payout>,
        framework: Framework,
    ) -> Self {
        StoppingProblem {
            name: name.into(),
            process,
            payout,
            framework,
            bound: None,
            normalized: false,
            tree: None,
        }
    }

    /// Declares `0 <= Z <= bound`; a bound of at most 1 marks the problem normalized.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.normalized = bound <= 1.0;
        self
    }

    /// Attaches an exact tree describing the same law, for exact queries.
    pub fn with_tree(mut self, tree: Arc<FiniteTreeProcess>) -> Self {
        self.tree = Some(tree);
        self
    }

    pub fn with_framework(mut self, framework: Framework) -> Self {
        self.framework = framework;
        self
    }

    pub fn from_tree(name: impl Into<String>, tree: FiniteTreeProcess, framework: Framework) -> Self {
        let tree = Arc::new(tree);
        let bound = tree.max_payout();
        StoppingProblem::new(name, tree.clone(), Arc::new(TreePayout(tree.clone())), framework)
            .with_bound(bound)
            .with_tree(tree)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn framework(&self) -> Framework {
        self.framework
    }
    pub fn dim(&self) -> usize {
        self.process.dim()
    }
    pub fn horizon(&self) -> usize {
        self.process.horizon()
    }
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
    pub fn tree(&self) -> Option<&Arc<FiniteTreeProcess>> {
        self.tree.as_ref()
    }

    /// Payout at time `t`, checked against the declared range.
    #[inline]
    pub fn payout_at(&self, t: usize, path: &[f64]) -> Result<f64> {
        let z = self.payout.eval(t, path)?;
        if !(z >= 0.0) || self.bound.is_some_and(|b| z > b * (1.0 + 1e-12)) {
            return Err(Error::invariant(format!(
                "payout {z} at t={t} outside [0, {}]",
                self.bound.unwrap_or(f64::INFINITY)
            )));
        }
        Ok(z)
    }

    #[inline]
    pub fn complete(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()> {
        self.process.complete(path, t, rng)
    }

    #[inline]
    pub fn complete_until(
        &self,
        path: &mut [f64],
        t: usize,
        until: usize,
        rng: &mut StreamRng,
    ) -> Result<()> {
        self.process.complete_until(path, t, until, rng)
    }

    /// One draw from the law of the full path given `prefix`.
    pub fn sample_path(&self, prefix: &PathPrefix, key: &StreamKey) -> Result<PathPrefix> {
        let (d, t) = (self.dim(), prefix.len());
        if prefix.dim() != d || t > self.horizon() {
            return Err(Error::arg("prefix does not match the problem's dimension or horizon"));
        }
        let mut path = vec![0.0; d * self.horizon()];
        path[..d * t].copy_from_slice(prefix.values());
        self.complete(&mut path, t, &mut key.rng())?;
        PathPrefix::new(d, path)
    }

    pub(crate) fn check_prefix(&self, prefix: &PathPrefix) -> Result<()> {
        if prefix.dim() != self.dim() {
            return Err(Error::arg(format!(
                "prefix has D={} but the problem has D={}",
                prefix.dim(),
                self.dim()
            )));
        }
        if prefix.is_empty() || prefix.len() > self.horizon() {
            return Err(Error::arg(format!(
                "prefix length {} outside [1, {}]",
                prefix.len(),
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "iid_uniform(T)",
    "robbins(T)",
    "two_point(n)",
    "expo_balanced",
    "expo_unbalanced",
    "uniform_balanced",
    "not_sure",
];

/// Parses `name` or `name(param)`.
pub fn builtin(spec: &str) -> Result<StoppingProblem> {
    let spec = spec.trim();
    let (name, param) = match spec.find('(') {
        Some(open) => {
            let inner = spec[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownProblem(spec.to_string()))?;
            let v: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::arg(format!("bad parameter in `{spec}`")))?;
            (&spec[..open], Some(v))
        }
        None => (spec, None),
    };
    let horizon = |v: Option<f64>| -> Result<usize> {
        match v {
            Some(t) if t >= 1.0 && t.fract() == 0.0 && t <= 10_000.0 => Ok(t as usize),
            _ => Err(Error::arg(format!("`{name}` needs an integer horizon T >= 1"))),
        }
    };
    let no_param = |p: Option<f64>| -> Result<()> {
        match p {
            None => Ok(()),
            Some(_) => Err(Error::arg(format!("`{name}` takes no parameter"))),
        }
    };
    let id = Arc::new(IdentityPayout { dim: 1 });
    let p = match name {
        "iid_uniform" => {
            let t = horizon(param)?;
            StoppingProblem::new(spec, Arc::new(IidUniform { horizon: t }), id, Framework::Minimize)
                .with_bound(1.0)
        }
        "robbins" => {
            let t = horizon(param)?;
            StoppingProblem::new(
                spec,
                Arc::new(IidUniform { horizon: t }),
                Arc::new(RobbinsPayout { horizon: t }),
                Framework::Minimize,
            )
            .with_bound(t as f64)
        }
        "two_point" => {
            let n = param.ok_or_else(|| Error::arg("two_point needs n"))?;
            let tree = Arc::new(FiniteTreeProcess::two_point(n)?);
            let proc = TwoPeriod {
                first: 1.0 / n,
                second: SecondLaw::Bernoulli { p: 1.0 / n },
            };
            StoppingProblem::new(spec, Arc::new(proc), id, Framework::Minimize)
                .with_bound(1.0)
                .with_tree(tree)
        }
        "expo_balanced" | "expo_unbalanced" => {
            no_param(param)?;
            let first = if name == "expo_balanced" { 1.0 } else { 0.5 };
            let proc = TwoPeriod {
                first,
                second: SecondLaw::Exponential,
            };
            StoppingProblem::new(spec, Arc::new(proc), id, Framework::Minimize)
        }
        "uniform_balanced" => {
            no_param(param)?;
            let proc = TwoPeriod {
                first: 1.0,
                second: SecondLaw::Uniform { hi: 2.0 },
            };
            StoppingProblem::new(spec, Arc::new(proc), id, Framework::Minimize).with_bound(2.0)
        }
        "not_sure" => {
            no_param(param)?;
            StoppingProblem::from_tree(spec, FiniteTreeProcess::not_sure_example(), Framework::Minimize)
        }
        _ => return Err(Error::UnknownProblem(spec.to_string())),
    };
    Ok(p)
}

/// Loads a tree file as a problem.
pub fn tree_problem(path: impl AsRef<std::path::Path>, framework: Framework) -> Result<StoppingProblem> {
    let path = path.as_ref();
    let tree = FiniteTreeProcess::from_file(path)?;
    Ok(StoppingProblem::from_tree(
        format!("tree:{}", path.display()),
        tree,
        framework,
    ))
}
