//! Pricing optimal stopping problems through the pure-dual expansion.
//!
//! The value `OPT = inf_tau E[Z_tau]` of a stopping problem is written as a
//! sum `H_1 + H_2 + ...` where `H_k = E[min_t Z^k_t]`, `Z^1 = Z` and
//! `Z^{k+1}_t = Z^k_t - E[min_i Z^k_i | F_t]`. For payouts in `[0, 1]` the
//! partial sums miss `OPT` by at most `1/(k+1)`.
//!
//! [`exact`] evaluates the expansion on finite trees, [`nested`] estimates
//! it by nested simulation from a path sampler, [`max_pricing`] handles
//! maximization by truncation, and [`policy`] turns the levels into
//! stopping rules. [`oracles`] holds the independent references.

pub mod analytics;
pub mod budget;
pub mod cli;
pub mod error;
pub mod exact;
pub mod max_pricing;
pub mod nested;
pub mod oracles;
pub mod policy;
pub mod process;
pub mod rng;
pub mod stats;
pub mod tree;

pub use budget::{BudgetMode, InnerScheme, PracticalCounts, SampleBudget};
pub use error::{Error, Result};
pub use nested::{Estimate, ExpansionOptions, Transform};
pub use process::{builtin, Framework, PathPrefix, StoppingProblem};
pub use rng::StreamKey;
pub use tree::FiniteTreeProcess;
