//! Command-line front end: `price`, `verify`, `policy` and `converge`.
//!
//! Every flag can also come from a TOML file passed with `--config`; keys
//! are the flag names with dashes replaced by underscores (`trunc_u`,
//! `max_calls`, ...). Flags on the command line win over the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::analytics;
use crate::budget::{BudgetMode, InnerScheme, PracticalCounts, SampleBudget};
use crate::error::{Error, Result};
use crate::exact::{self, error_bound, exact_levels, hk_bound, path_min_max, ProblemStats};
use crate::max_pricing::{
    estimate_max_moments, estimate_opt_max, exact_max_moments, paley_zygmund_floor, predict_opt_max_calls,
    MaxMoments,
};
use crate::nested::{
    estimate_expansion, estimate_modified, estimate_opt_min, predict_expansion_calls, predict_zk_calls,
    strict_levels, ExpansionOptions, Transform,
};
use crate::oracles::{backward_induction, brute_force_opt, count_rules, flow_to_martingale, max_flow, round_flow, FlowNetwork};
use crate::policy::{evaluate_policy, tau_k_exact, TauEps};
use crate::process::{builtin, tree_problem, Framework, StoppingProblem};
use crate::rng::StreamKey;
use crate::tree::{FiniteTreeProcess, RandomTreeConfig};

/// Ceiling on predicted simulator calls for strict runs unless `--max-calls` says otherwise.
pub const DEFAULT_MAX_CALLS: u64 = 100_000_000;

const DEFAULT_OUTER: [usize; 3] = [100_000, 10_000, 1_000];
const DEFAULT_INNER: [usize; 1] = [8];

#[derive(Parser, Debug)]
#[command(name = "dualstop", version, about = "Pure-dual expansions for optimal stopping")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the optimal value.
    Price(RunArgs),
    /// Cross-check the exact oracles on a tree instance.
    Verify(RunArgs),
    /// Run the online stopping rule over simulated episodes.
    Policy(RunArgs),
    /// Table of E_k against the known convergence rates.
    Converge(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price(_) => "price",
            Command::Verify(_) => "verify",
            Command::Policy(_) => "policy",
            Command::Converge(_) => "converge",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Price(a) | Command::Verify(a) | Command::Policy(a) | Command::Converge(a) => a,
        }
    }
}

/// Flags shared by all commands. Counts accept scientific notation (`1e5`).
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// Builtin problem, e.g. `iid_uniform(4)`, `two_point(2)`, `robbins(10)`.
    #[arg(long)]
    pub problem: Option<String>,
    /// JSON tree file.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// `min` or `max`.
    #[arg(long)]
    pub framework: Option<String>,
    /// `strict`, `practical` or `exact`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of expansion levels K (policy: the level k of tau_k).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Restrict path minima to `[1, ceil((1 - eta) T)]`.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Truncation level for the maximization framework.
    #[arg(long = "trunc-U")]
    pub trunc_u: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Where to write the result record (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-level table file (tab separated).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<f64>,
    #[arg(long)]
    pub max_calls: Option<f64>,
    /// Practical outer counts, one per level.
    #[arg(long, value_delimiter = ',')]
    pub outer: Option<Vec<f64>>,
    /// Practical inner counts (nested) or branching factors (tree).
    #[arg(long, value_delimiter = ',')]
    pub inner: Option<Vec<f64>>,
    /// Practical inner scheme, `tree` or `nested`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Include per-step decisions in the policy record.
    #[arg(long)]
    #[serde(default)]
    pub trace: bool,
    /// Grid points for discretized continuous examples.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Paths used to estimate the moments of the maximum.
    #[arg(long)]
    pub moment_samples: Option<f64>,
    /// Number of seeded random trees for `verify`.
    #[arg(long)]
    pub random: Option<usize>,
}

macro_rules! merge {
    ($cli:expr, $file:expr, $($f:ident),*) => {
        RunArgs { $($f: $cli.$f.clone().or($file.$f.clone()),)* trace: $cli.trace || $file.trace }
    };
}

impl RunArgs {
    fn merged(&self, file: &RunArgs) -> RunArgs {
        merge!(
            self, file, problem, tree, framework, mode, eps, delta, levels, eta, trunc_u, seed, workers, out,
            table, episodes, max_calls, outer, inner, scheme, grid, moment_samples, random
        )
    }
}

fn load_config(path: &Path) -> Result<RunArgs> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::arg(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Strict,
    Practical,
    Exact,
}

/// Validated settings of one run.
#[derive(Debug)]
pub struct RunConfig {
    command: &'static str,
    args: RunArgs,
    mode: Mode,
    framework: Option<Framework>,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => load_config(p)?,
            None => RunArgs::default(),
        };
        Self::new(cli.command.name(), cli.command.args().merged(&file))
    }

    fn new(command: &'static str, args: RunArgs) -> Result<Self> {
        let mode = match args.mode.as_deref() {
            None if command == "converge" => Mode::Exact,
            None => Mode::Practical,
            Some("strict") => Mode::Strict,
            Some("practical") => Mode::Practical,
            Some("exact") => Mode::Exact,
            Some(m) => return Err(Error::arg(format!("mode: expected strict, practical or exact, got `{m}`"))),
        };
        for (name, v) in [("eps", args.eps), ("delta", args.delta), ("eta", args.eta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::arg(format!("{name}: must lie in (0, 1), got {v}")));
                }
            }
        }
        if args.problem.is_some() && args.tree.is_some() {
            return Err(Error::arg("problem and tree are mutually exclusive"));
        }
        if args.workers == Some(0) {
            return Err(Error::arg("workers: must be at least 1"));
        }
        let framework = args.framework.as_deref().map(str::parse).transpose()?;
        Ok(RunConfig {
            command,
            args,
            mode,
            framework,
        })
    }

    fn seed(&self) -> Result<u64> {
        self.args
            .seed
            .ok_or_else(|| Error::arg(format!("seed: required for randomized `{}` runs", self.command)))
    }

    fn eps(&self) -> Result<f64> {
        self.args
            .eps
            .ok_or_else(|| Error::arg(format!("eps: required for `{}`", self.command)))
    }

    fn problem(&self) -> Result<StoppingProblem> {
        let p = match (&self.args.problem, &self.args.tree) {
            (Some(name), None) => builtin(name)?,
            (None, Some(path)) => tree_problem(path, Framework::Minimize)?,
            _ => return Err(Error::arg("one of problem or tree is required")),
        };
        Ok(match self.framework {
            Some(f) => p.with_framework(f),
            None => p,
        })
    }

    fn budget(&self) -> Result<SampleBudget> {
        let eps = self.args.eps.unwrap_or(0.1);
        let delta = self.args.delta.unwrap_or(0.1);
        match self.mode {
            Mode::Strict => {
                let ceiling = match self.args.max_calls {
                    Some(c) => count("max_calls", c)?,
                    None => DEFAULT_MAX_CALLS as usize,
                };
                Ok(SampleBudget::strict(self.eps()?, delta)?.with_max_calls(Some(ceiling as u64)))
            }
            Mode::Practical => {
                let scheme = match self.args.scheme.as_deref() {
                    None => InnerScheme::Tree,
                    Some(s) => s.parse()?,
                };
                let outer = match &self.args.outer {
                    Some(v) => counts("outer", v)?,
                    None => DEFAULT_OUTER.to_vec(),
                };
                let inner = match &self.args.inner {
                    Some(v) => counts("inner", v)?,
                    None => DEFAULT_INNER.to_vec(),
                };
                let ceiling = self.args.max_calls.map(|c| count("max_calls", c)).transpose()?;
                Ok(SampleBudget::practical(eps, delta, PracticalCounts::new(scheme, outer, inner)?)?
                    .with_max_calls(ceiling.map(|c| c as u64)))
            }
            Mode::Exact => Err(Error::arg("exact mode has no sampling budget")),
        }
    }
}

fn count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 9.0e15 {
        Ok(v as usize)
    } else {
        Err(Error::arg(format!("{name}: expected a positive integer count, got {v}")))
    }
}

fn counts(name: &str, v: &[f64]) -> Result<Vec<usize>> {
    v.iter().map(|&x| count(name, x)).collect()
}

/// Result of one command.
#[derive(Debug)]
pub struct Outcome {
    /// Main output: a JSON record, or the table for `converge`.
    pub output: String,
    pub table: Option<String>,
    /// False when `verify` found a failing check.
    pub ok: bool,
}

/// Exit status for an error: 2 for bad input, 3 for a violated invariant,
/// 4 when the call ceiling refused the run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BudgetCeiling { .. } => 4,
        Error::Invariant(_) | Error::ToleranceNotReached { .. } | Error::OutsideSupport { .. } => 3,
        Error::PolicyAborted { source, .. } => exit_code(source),
        _ => 2,
    }
}

/// Runs a parsed command line, inside a pool of `--workers` threads if given.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = RunConfig::from_cli(cli)?;
    match cfg.args.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::arg(format!("workers: {e}")))?
            .install(|| dispatch(&cfg)),
        None => dispatch(&cfg),
    }
}

/// Writes an outcome where the config asks for it.
pub fn emit(cli: &Cli, outcome: &Outcome) -> Result<()> {
    let cfg = RunConfig::from_cli(cli)?;
    match &cfg.args.out {
        Some(p) => std::fs::write(p, &outcome.output)?,
        None => print!("{}", outcome.output),
    }
    if let (Some(p), Some(t)) = (&cfg.args.table, &outcome.table) {
        std::fs::write(p, t)?;
    }
    Ok(())
}

fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command {
        "price" => cmd_price(cfg),
        "verify" => cmd_verify(cfg),
        "policy" => cmd_policy(cfg),
        _ => cmd_converge(cfg),
    }
}

fn record(v: Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn preview(predicted: f64, budget: &SampleBudget) {
    if let BudgetMode::Strict = budget.mode {
        eprintln!(
            "predicted base-simulator calls: {predicted:.4e} (ceiling {})",
            budget.max_calls.unwrap_or(DEFAULT_MAX_CALLS)
        );
    }
}

fn level_table(levels: &[crate::nested::LevelEstimate]) -> String {
    let mut s = String::from("k\th_k\tstd_error\tsamples\n");
    for l in levels {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", l.k, l.value, l.std_error, l.samples);
    }
    s
}

pub fn cmd_price(cfg: &RunConfig) -> Result<Outcome> {
    let problem = cfg.problem()?;
    let fw = problem.framework();
    if cfg.mode == Mode::Exact {
        let tree = problem
            .tree()
            .ok_or_else(|| Error::arg("exact mode needs a tree instance"))?;
        let dp = backward_induction(tree, fw)?;
        let mut levels = Vec::new();
        if fw == Framework::Minimize {
            let lv = exact_levels(tree, cfg.args.levels.unwrap_or(10))?;
            levels = (1..=lv.levels())
                .map(|k| json!({"k": k, "h_k": lv.h(k), "e_k": lv.e(k)}))
                .collect();
        }
        let out = record(json!({
            "command": "price",
            "problem": problem.name(),
            "framework": fw.to_string(),
            "mode": "exact",
            "estimate": dp.opt,
            "calls": 0,
            "levels": levels,
        }))?;
        return Ok(Outcome {
            output: out,
            table: None,
            ok: true,
        });
    }
    let seed = cfg.seed()?;
    let key = StreamKey::master(seed);
    let budget = cfg.budget()?;
    let (est, extra) = match fw {
        Framework::Minimize => {
            if cfg.args.trunc_u.is_some() {
                return Err(Error::arg("trunc_u: only used by the max framework"));
            }
            let levels = cfg.args.levels.unwrap_or(match &budget.mode {
                BudgetMode::Strict => strict_levels(budget.eps),
                BudgetMode::Practical(c) => c.outer.len(),
            });
            let opts = ExpansionOptions {
                transform: Transform::Identity,
                min_horizon: cfg
                    .args
                    .eta
                    .map(|eta| exact::t_eta(problem.horizon(), eta))
                    .transpose()?,
            };
            preview(predict_expansion_calls(&problem, levels, &budget, opts)?, &budget);
            let est = match cfg.args.eta {
                Some(eta) => estimate_modified(&problem, levels, eta, &budget, &key)?,
                None => estimate_opt_min(&problem, &budget, Some(levels), &key)?,
            };
            (est, json!({}))
        }
        Framework::Maximize => {
            if cfg.args.eta.is_some() {
                return Err(Error::arg("eta: only used by the min framework"));
            }
            let moments = match problem.tree() {
                Some(t) => exact_max_moments(t)?,
                None => {
                    let n = count("moment_samples", cfg.args.moment_samples.unwrap_or(1e5))?;
                    estimate_max_moments(&problem, n, &key.child(u64::MAX))?
                }
            };
            preview(
                predict_opt_max_calls(&problem, &moments, &budget, cfg.args.trunc_u, cfg.args.levels)?,
                &budget,
            );
            let m = estimate_opt_max(&problem, &moments, &budget, cfg.args.trunc_u, cfg.args.levels, &key)?;
            let extra = json!({
                "u": m.u,
                "gamma0": m.gamma0,
                "relative_bound": m.relative_bound,
                "moments": moments_json(&moments),
                "complement": m.complement.value,
            });
            let mut e = m.complement;
            e.value = m.value;
            e.std_error = m.std_error;
            (e, extra)
        }
    };
    let table = level_table(&est.levels);
    let out = record(json!({
        "command": "price",
        "problem": problem.name(),
        "framework": fw.to_string(),
        "mode": est.mode,
        "eps": est.eps,
        "delta": est.delta,
        "eta": cfg.args.eta,
        "estimate": est.value,
        "std_error": est.std_error,
        "calls": est.calls,
        "seed": est.seed,
        "max": extra,
        "levels": est.levels,
    }))?;
    Ok(Outcome {
        output: out,
        table: Some(table),
        ok: true,
    })
}

fn moments_json(m: &MaxMoments) -> Value {
    json!({"m1": m.m1, "m2": m.m2, "se_m1": m.se_m1, "se_m2": m.se_m2, "samples": m.samples})
}

/// Worst violation of one check across all trees; `worst <= tol` passes.
#[derive(Debug)]
struct Check {
    name: &'static str,
    worst: f64,
    tol: f64,
    skipped: usize,
}

struct Checks(Vec<Check>);

impl Checks {
    fn note(&mut self, name: &'static str, violation: f64, tol: f64) {
        match self.0.iter_mut().find(|c| c.name == name) {
            Some(c) => c.worst = c.worst.max(violation),
            None => self.0.push(Check {
                name,
                worst: violation,
                tol,
                skipped: 0,
            }),
        }
    }

    fn skip(&mut self, name: &'static str, tol: f64) {
        self.note(name, f64::NEG_INFINITY, tol);
        if let Some(c) = self.0.iter_mut().find(|c| c.name == name) {
            c.skipped += 1;
        }
    }

    fn fail(&mut self, name: &'static str) {
        self.note(name, f64::INFINITY, 0.0);
    }
}

const EXACT_TOL: f64 = 1e-12;

/// Oracle-equivalence checks on one tree, minimization framework.
fn verify_tree(tree: &FiniteTreeProcess, levels: usize, checks: &mut Checks) -> Result<()> {
    let dp = backward_induction(tree, Framework::Minimize)?.opt;
    if count_rules(tree) <= 1e6 {
        let bf = brute_force_opt(tree, Framework::Minimize)?;
        checks.note("dp_vs_brute_force", (dp - bf).abs(), EXACT_TOL);
    } else {
        checks.skip("dp_vs_brute_force", EXACT_TOL);
    }
    let net = FlowNetwork::from_tree(tree);
    let flow = max_flow(&net);
    checks.note("dp_vs_max_flow", (dp - flow.value).abs(), EXACT_TOL);
    match flow_to_martingale(&net, &flow) {
        Ok(_) => checks.note("martingale_tower_domination_saturation", 0.0, EXACT_TOL),
        Err(_) => checks.fail("martingale_tower_domination_saturation"),
    }
    let u = tree.max_payout();
    let lv = exact_levels(tree, levels)?;
    let mut cum = 0.0;
    for k in 1..=levels {
        let gap = dp - lv.e(k);
        checks.note("sandwich_0_le_gap_le_u_over_k_plus_1", (-gap).max(gap - u / (k as f64 + 1.0)), EXACT_TOL);
        checks.note("pathwise_min_le_u_over_k", path_min_max(tree, lv.z(k)) - u / k as f64, EXACT_TOL);
        let rf = round_flow(tree, &lv, k)?;
        let cap = FlowNetwork::with_payouts(tree, lv.z(k));
        match cap.check_feasible(&rf, EXACT_TOL) {
            Ok(()) => checks.note("round_flow_feasible", 0.0, EXACT_TOL),
            Err(_) => checks.fail("round_flow_feasible"),
        }
        cum += rf.value;
        checks.note("round_flow_total_eq_e_k", (cum - lv.e(k)).abs(), EXACT_TOL);
    }
    Ok(())
}

fn verify_max_tree(tree: &FiniteTreeProcess, checks: &mut Checks) -> Result<()> {
    let dp = backward_induction(tree, Framework::Maximize)?.opt;
    if count_rules(tree) <= 1e6 {
        let bf = brute_force_opt(tree, Framework::Maximize)?;
        checks.note("dp_vs_brute_force", (dp - bf).abs(), EXACT_TOL);
    } else {
        checks.skip("dp_vs_brute_force", EXACT_TOL);
    }
    if tree.max_payout() > 0.0 {
        let m = exact_max_moments(tree)?;
        checks.note("paley_zygmund_floor", paley_zygmund_floor(&m) - dp, EXACT_TOL);
    }
    Ok(())
}

fn two_point_param(name: &str) -> Option<f64> {
    name.strip_prefix("two_point(")?.strip_suffix(')')?.trim().parse().ok()
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let levels = cfg.args.levels.unwrap_or(20);
    let fw = cfg.framework.unwrap_or(Framework::Minimize);
    let mut checks = Checks(Vec::new());
    let (name, n_trees) = match cfg.args.random {
        Some(n) => {
            let key = StreamKey::master(cfg.seed()?);
            for i in 0..n {
                let tree = FiniteTreeProcess::random(&mut key.child(i as u64).rng(), &RandomTreeConfig::default());
                match fw {
                    Framework::Minimize => verify_tree(&tree, levels, &mut checks)?,
                    Framework::Maximize => verify_max_tree(&tree, &mut checks)?,
                }
            }
            ("random".to_string(), n)
        }
        None => {
            let problem = cfg.problem()?;
            let tree = problem
                .tree()
                .ok_or_else(|| Error::arg("verify needs a tree instance (tree file, two_point(n), not_sure, or --random)"))?;
            match fw {
                Framework::Minimize => verify_tree(tree, levels, &mut checks)?,
                Framework::Maximize => verify_max_tree(tree, &mut checks)?,
            }
            if let (Some(n), Framework::Minimize) = (two_point_param(problem.name()), fw) {
                let lv = exact_levels(tree, levels)?;
                for k in 1..=levels {
                    let want = analytics::two_point_gap(n, k)?;
                    checks.note("two_point_gap_formula", (1.0 / n - lv.e(k) - want).abs(), EXACT_TOL);
                }
            }
            (problem.name().to_string(), 1)
        }
    };
    let pass = checks.0.iter().all(|c| c.worst <= c.tol);
    let rows: Vec<Value> = checks
        .0
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "worst": if c.worst.is_finite() { json!(c.worst) } else { json!(c.worst.to_string()) },
                "tol": c.tol,
                "skipped": c.skipped,
                "pass": c.worst <= c.tol,
            })
        })
        .collect();
    let out = record(json!({
        "command": "verify",
        "problem": name,
        "framework": fw.to_string(),
        "trees": n_trees,
        "levels": levels,
        "checks": rows,
        "pass": pass,
    }))?;
    Ok(Outcome {
        output: out,
        table: None,
        ok: pass,
    })
}

pub fn cmd_policy(cfg: &RunConfig) -> Result<Outcome> {
    let problem = cfg.problem()?;
    let opt = problem
        .tree()
        .map(|t| backward_induction(t, problem.framework()).map(|d| d.opt))
        .transpose()?;
    if cfg.mode == Mode::Exact {
        let tree = problem
            .tree()
            .ok_or_else(|| Error::arg("exact mode needs a tree instance"))?;
        let k = cfg.args.levels.unwrap_or(10);
        let pol = tau_k_exact(tree, k)?;
        let out = record(json!({
            "command": "policy",
            "problem": problem.name(),
            "mode": "exact",
            "rule": format!("tau_{k}"),
            "value": pol.value,
            "opt": opt,
            "bound": opt.map(|o| o + 1.0 / k as f64),
        }))?;
        return Ok(Outcome {
            output: out,
            table: None,
            ok: true,
        });
    }
    let eps = cfg.eps()?;
    let seed = cfg.seed()?;
    let episodes = count("episodes", cfg.args.episodes.unwrap_or(1000.0))?;
    let budget = cfg.budget()?;
    let rule = TauEps::new(eps, budget.clone())?;
    let mut predicted = 0.0;
    for t in 1..problem.horizon() {
        predicted += predict_zk_calls(&problem, rule.level(), t, &rule.decision_budget(problem.horizon()), rule.opts)?;
    }
    predicted *= episodes as f64;
    preview(predicted, &budget);
    if let Some(c) = budget.max_calls {
        if predicted > c as f64 {
            return Err(Error::BudgetCeiling {
                predicted,
                ceiling: c,
            });
        }
    }
    let (ev, runs) = evaluate_policy(&problem, &rule, episodes, &StreamKey::master(seed))?;
    let traces: Option<Vec<_>> = cfg.args.trace.then(|| runs.iter().map(|e| &e.trace).collect());
    let out = record(json!({
        "command": "policy",
        "problem": problem.name(),
        "mode": budget.mode_name(),
        "eps": eps,
        "level": rule.level(),
        "episodes": ev.episodes,
        "mean": ev.mean,
        "std_error": ev.std_error,
        "mean_stop_time": ev.mean_stop_time,
        "seed": ev.seed,
        "opt": opt,
        "traces": traces,
    }))?;
    Ok(Outcome {
        output: out,
        table: None,
        ok: true,
    })
}

/// Tree used by `converge`, plus the closed-form gap sequence when one is known.
fn converge_instance(cfg: &RunConfig, levels: usize) -> Result<(String, FiniteTreeProcess, bool, Option<Vec<f64>>)> {
    let grid = cfg.args.grid.unwrap_or(2000);
    if let Some(path) = &cfg.args.tree {
        let t = FiniteTreeProcess::from_file(path)?;
        let norm = t.max_payout() <= 1.0;
        return Ok((format!("tree:{}", path.display()), t, norm, None));
    }
    let name = cfg
        .args
        .problem
        .clone()
        .ok_or_else(|| Error::arg("one of problem or tree is required"))?;
    if let Some(n) = two_point_param(&name) {
        let gaps = (1..=levels).map(|k| analytics::two_point_gap(n, k)).collect::<Result<_>>()?;
        return Ok((name, FiniteTreeProcess::two_point(n)?, true, Some(gaps)));
    }
    let (tree, trace) = match name.as_str() {
        "expo_balanced" => (analytics::exponential_grid_tree(1.0, grid)?, analytics::expo_balanced_seq(levels)),
        "expo_unbalanced" => (analytics::exponential_grid_tree(0.5, grid)?, analytics::expo_unbalanced_seq(levels)),
        "uniform_balanced" => (analytics::uniform_grid_tree(1.0, 2.0, grid)?, analytics::uniform_balanced_seq(levels)),
        _ => {
            let p = builtin(&name)?;
            let t = p
                .tree()
                .ok_or_else(|| Error::arg(format!("`{name}` has no finite tree; pass a tree file")))?;
            return Ok((name, (**t).clone(), p.is_normalized(), None));
        }
    };
    Ok((name, tree, false, Some(trace.gap)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:e}"))
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<Outcome> {
    let levels = cfg.args.levels.unwrap_or(10);
    let mut table = String::from("k\te_k\tgap_exact\tgap_formula\tbound\th_k\n");
    if levels == 0 {
        return Ok(Outcome {
            output: table,
            table: None,
            ok: true,
        });
    }
    let (_, tree, normalized, formula) = converge_instance(cfg, levels)?;
    let opt = backward_induction(&tree, Framework::Minimize)?.opt;
    let stats = if normalized {
        ProblemStats::Normalized
    } else {
        let second: f64 = tree.leaves().map(|l| tree.path_prob(l) * tree.payout(l).powi(2)).sum();
        ProblemStats::Unnormalized {
            second_moment_last: second,
            opt,
        }
    };
    let e: Vec<f64> = match cfg.mode {
        Mode::Exact => {
            let lv = exact_levels(&tree, levels)?;
            (1..=levels).map(|k| lv.e(k)).collect()
        }
        _ => {
            let problem = StoppingProblem::from_tree("converge", tree.clone(), Framework::Minimize);
            let est = estimate_expansion(
                &problem,
                levels,
                &cfg.budget()?,
                ExpansionOptions::default(),
                &StreamKey::master(cfg.seed()?),
            )?;
            est.levels
                .iter()
                .scan(0.0, |acc, l| {
                    *acc += l.value;
                    Some(*acc)
                })
                .collect()
        }
    };
    for k in 1..=levels {
        let h = if normalized && opt <= 1.0 {
            Some(hk_bound(k, opt)?)
        } else {
            None
        };
        let _ = writeln!(
            table,
            "{k}\t{:e}\t{:e}\t{}\t{:e}\t{}",
            e[k - 1],
            opt - e[k - 1],
            fmt_opt(formula.as_ref().map(|g| g[k - 1])),
            error_bound(stats, k)?,
            fmt_opt(h),
        );
    }
    Ok(Outcome {
        output: table,
        table: None,
        ok: true,
    })
}
