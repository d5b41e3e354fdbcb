//! Sample-size rules for the nested estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `N(eps, delta) = ceil(ln(2/delta) / (2 eps^2))` as a float, so that
/// astronomically large counts can still be reported.
pub fn hoeffding_count_f64(eps: f64, delta: f64) -> Result<f64> {
    check_eps_delta(eps, delta)?;
    Ok(((2.0 / delta).ln() / (2.0 * eps * eps)).ceil())
}

/// Hoeffding sample size for an `eps`-accurate mean of `[0,1]` variables
/// with failure probability `delta`.
pub fn hoeffding_count(eps: f64, delta: f64) -> Result<u64> {
    let n = hoeffding_count_f64(eps, delta)?;
    if n > u64::MAX as f64 / 2.0 {
        return Err(Error::TooLarge(format!("N({eps}, {delta}) = {n:e}")));
    }
    Ok(n as u64)
}

/// Closed-form call budget `f_k(eps, delta)` for horizon `T`.
pub fn budget_f(k: usize, eps: f64, delta: f64, horizon: usize) -> Result<f64> {
    check_eps_delta(eps, delta)?;
    if k == 0 || horizon == 0 {
        return Err(Error::arg("k and T must be at least 1"));
    }
    let j = (k - 1) as f64;
    let t = horizon as f64;
    let log_term = 1.0 + (1.0 / delta).ln() + (1.0 / eps).ln() + t.ln();
    // work in logs, the power of ten overflows quickly
    let ln_f = 2.0 * j * j * 10f64.ln() - 2.0 * j * eps.ln() + j * (t + 2.0).ln() + j * log_term.ln();
    Ok(ln_f.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerScheme {
    /// Independent inner loops exactly as in the strict recursion.
    Nested,
    /// One sampled scenario tree per outer draw, shared by every level.
    Tree,
}

impl std::str::FromStr for InnerScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nested" => Ok(InnerScheme::Nested),
            "tree" => Ok(InnerScheme::Tree),
            _ => Err(Error::arg(format!("unknown scheme `{s}` (nested|tree)"))),
        }
    }
}

/// Fixed loop counts replacing the Hoeffding sizes.
///
/// `outer[k-1]` is the number of outer draws for level `k`. Under
/// [`InnerScheme::Nested`], `inner[j-2]` is the loop count of every call to
/// the level-`j` conditional estimator; under [`InnerScheme::Tree`],
/// `inner[d-1]` is the branching factor from depth `d` to `d+1`. Both lists
/// repeat their last entry when too short.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PracticalCounts {
    pub scheme: InnerScheme,
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
}

impl PracticalCounts {
    pub fn new(scheme: InnerScheme, outer: Vec<usize>, inner: Vec<usize>) -> Result<Self> {
        if outer.is_empty() || inner.is_empty() {
            return Err(Error::arg("practical counts need at least one outer and one inner entry"));
        }
        if outer.iter().chain(&inner).any(|&c| c == 0) {
            return Err(Error::arg("practical counts must be positive"));
        }
        Ok(PracticalCounts {
            scheme,
            outer,
            inner,
        })
    }

    pub(crate) fn outer_for(&self, k: usize) -> usize {
        self.outer[(k - 1).min(self.outer.len() - 1)]
    }

    pub(crate) fn inner_at(&self, i: usize) -> usize {
        self.inner[i.min(self.inner.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BudgetMode {
    Strict,
    Practical(PracticalCounts),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub eps: f64,
    pub delta: f64,
    pub mode: BudgetMode,
    /// Refuse to start when the predicted number of base-simulator calls is larger.
    pub max_calls: Option<u64>,
}

impl SampleBudget {
    pub fn strict(eps: f64, delta: f64) -> Result<Self> {
        check_eps_delta(eps, delta)?;
        Ok(SampleBudget {
            eps,
            delta,
            mode: BudgetMode::Strict,
            max_calls: None,
        })
    }

    pub fn practical(eps: f64, delta: f64, counts: PracticalCounts) -> Result<Self> {
        check_eps_delta(eps, delta)?;
        Ok(SampleBudget {
            eps,
            delta,
            mode: BudgetMode::Practical(counts),
            max_calls: None,
        })
    }

    pub fn with_max_calls(mut self, max_calls: Option<u64>) -> Self {
        self.max_calls = max_calls;
        self
    }

    pub fn mode_name(&self) -> &'static str {
        match &self.mode {
            BudgetMode::Strict => "strict",
            BudgetMode::Practical(c) => match c.scheme {
                InnerScheme::Nested => "practical-nested",
                InnerScheme::Tree => "practical-tree",
            },
        }
    }

    pub(crate) fn check_ceiling(&self, predicted: f64) -> Result<()> {
        match self.max_calls {
            Some(c) if predicted > c as f64 => Err(Error::BudgetCeiling {
                predicted,
                ceiling: c,
            }),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_small_cases() {
        // ln(20) / 0.02 = 149.79
        assert_eq!(hoeffding_count(0.1, 0.1).unwrap(), 150);
        assert_eq!(hoeffding_count(0.025, 0.025).unwrap(), 3506);
        assert!(hoeffding_count(0.0, 0.1).is_err());
        assert!(hoeffding_count(0.1, 1.0).is_err());
    }

    #[test]
    fn f1_is_one() {
        assert!((budget_f(1, 0.1, 0.1, 4).unwrap() - 1.0).abs() < 1e-12);
        let f2 = budget_f(2, 0.5, 0.5, 1).unwrap();
        let want = 100.0 * 4.0 * 3.0 * (1.0 + 2f64.ln() * 2.0);
        assert!((f2 / want - 1.0).abs() < 1e-12);
    }
}
