//! Exact pure-dual expansion on finite trees.
//!
//! Level `k` costs two sweeps over the nodes: a forward sweep carrying the
//! running minimum of `Z^k` along each path and a reverse sweep averaging it
//! back up into `E[min Z^k | F_t]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{Arena, FiniteTreeProcess, NONE};

/// One expansion step in place: `z` becomes `Z^{k+1}`, `m` holds the
/// conditional expected minimum and the return value is `H_k`.
pub(crate) fn step(arena: &Arena, z: &mut [f64], rm: &mut [f64], m: &mut [f64], h: usize) -> f64 {
    let n = arena.len();
    for i in 0..n {
        let p = arena.parent[i];
        rm[i] = if p == NONE {
            z[i]
        } else if arena.depth[i] <= h {
            rm[p].min(z[i])
        } else {
            rm[p]
        };
    }
    m[..n].fill(0.0);
    let mut total = 0.0;
    for i in (0..n).rev() {
        if arena.leaf[i] {
            m[i] = rm[i];
        }
        let p = arena.parent[i];
        let w = arena.prob[i] * m[i];
        if p == NONE {
            total += w;
        } else {
            m[p] += w;
        }
    }
    for i in 0..n {
        z[i] -= m[i];
    }
    total
}

/// Exact `Z^k`, `E[min Z^k | F_t]` and `H_k` for `k = 1..=K`.
#[derive(Clone, Debug)]
pub struct LevelValues {
    z: Vec<Vec<f64>>,
    cond_min: Vec<Vec<f64>>,
    h: Vec<f64>,
    min_horizon: usize,
}

impl LevelValues {
    pub fn levels(&self) -> usize {
        self.h.len()
    }

    /// Horizon over which minima are taken (`T` for the standard expansion).
    pub fn min_horizon(&self) -> usize {
        self.min_horizon
    }

    pub fn h(&self, k: usize) -> f64 {
        self.h[k - 1]
    }

    pub fn h_all(&self) -> &[f64] {
        &self.h
    }

    /// Partial sum `E_k = H_1 + ... + H_k`.
    pub fn e(&self, k: usize) -> f64 {
        self.h[..k].iter().sum()
    }

    /// `Z^k` at every node, for `k = 1..=K+1`.
    pub fn z(&self, k: usize) -> &[f64] {
        &self.z[k - 1]
    }

    /// `E[min Z^k | F_t]` at every node, for `k = 1..=K`.
    pub fn cond_min(&self, k: usize) -> &[f64] {
        &self.cond_min[k - 1]
    }

    pub fn records(&self, bound: Option<&dyn Fn(usize) -> f64>) -> Vec<LevelRecord> {
        (1..=self.levels())
            .map(|k| LevelRecord {
                k,
                h: self.h(k),
                e: self.e(k),
                bound: bound.map(|b| b(k)),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub k: usize,
    pub h: f64,
    pub e: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

pub(crate) fn expand(
    arena: &Arena,
    payouts: &[f64],
    levels: usize,
    min_horizon: usize,
    check_sign: bool,
) -> Result<LevelValues> {
    if levels == 0 {
        return Err(Error::arg("need at least one level"));
    }
    let n = arena.len();
    let scale = payouts.iter().copied().fold(1.0, f64::max);
    let mut z = payouts.to_vec();
    let mut rm = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut out = LevelValues {
        z: vec![z.clone()],
        cond_min: Vec::with_capacity(levels),
        h: Vec::with_capacity(levels),
        min_horizon,
    };
    for k in 1..=levels {
        let hk = step(arena, &mut z, &mut rm, &mut m, min_horizon);
        if check_sign {
            if let Some(i) =
                (0..n).find(|&i| arena.depth[i] <= min_horizon && z[i] < -1e-12 * scale)
            {
                return Err(Error::invariant(format!(
                    "Z^{} = {} < 0 at node index {i}",
                    k + 1,
                    z[i]
                )));
            }
        }
        out.h.push(hk);
        out.cond_min.push(m.clone());
        out.z.push(z.clone());
    }
    Ok(out)
}

/// Exact expansion levels `1..=K` of a tree.
pub fn exact_levels(tree: &FiniteTreeProcess, levels: usize) -> Result<LevelValues> {
    expand(&tree.arena, tree.payouts(), levels, tree.horizon(), true)
}

/// `t_eta(T) = ceil((1 - eta) T)`, clamped to at least 1.
pub fn t_eta(horizon: usize, eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::arg(format!("eta must lie in (0, 1), got {eta}")));
    }
    let x = (1.0 - eta) * horizon as f64;
    // (1 - 0.3) * 10 is 7.000000000000001 in binary
    let t = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    Ok((t as usize).clamp(1, horizon))
}

/// Modified expansion whose minima run over `[1, t_eta]` only.
pub fn exact_modified_levels(tree: &FiniteTreeProcess, levels: usize, eta: f64) -> Result<LevelValues> {
    let h = t_eta(tree.horizon(), eta)?;
    expand(&tree.arena, tree.payouts(), levels, h, true)
}

/// Dual martingale `MAR_t = E[sum_{k<=K} min_i Z^k_i | F_t]` at every node.
///
/// Fails when `min_t (Z - MAR)_t` exceeds `tol` on some path.
pub fn exact_mar(tree: &FiniteTreeProcess, levels: usize, tol: f64) -> Result<Vec<f64>> {
    let lv = exact_levels(tree, levels)?;
    let rest = lv.z(levels + 1);
    let residual = path_min_max(tree, rest);
    if residual > tol {
        let u = tree.max_payout();
        return Err(Error::ToleranceNotReached {
            k: levels,
            tol,
            residual,
            required_k: (u / tol).ceil() as u64,
        });
    }
    Ok(tree
        .payouts()
        .iter()
        .zip(rest)
        .map(|(z, r)| z - r)
        .collect())
}

/// Largest pathwise minimum of `values` over all root-to-leaf paths.
pub(crate) fn path_min_max(tree: &FiniteTreeProcess, values: &[f64]) -> f64 {
    let mut rm = vec![0.0; tree.len()];
    let mut worst = f64::NEG_INFINITY;
    for i in 0..tree.len() {
        rm[i] = match tree.parent(i) {
            None => values[i],
            Some(p) => rm[p].min(values[i]),
        };
        if tree.is_leaf(i) {
            worst = worst.max(rm[i]);
        }
    }
    worst
}

/// `h_k(x)`: `h_1(x) = (1 - x) ln(1 / (1 - x))` composed `k` times.
pub fn hk_bound(k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::arg(format!("x must lie in [0, 1], got {x}")));
    }
    let mut y = x;
    for _ in 0..k {
        y = if y >= 1.0 { 0.0 } else { -(1.0 - y) * (-y).ln_1p() };
    }
    Ok(y)
}

/// What is known about a problem when bounding `OPT - E_k`.
#[derive(Clone, Copy, Debug)]
pub enum ProblemStats {
    /// `0 <= Z <= 1`.
    Normalized,
    /// `E[Z_T^2]` and `OPT` for an unnormalized nonnegative payout.
    Unnormalized { second_moment_last: f64, opt: f64 },
}

/// Upper bound on `OPT - E_k`.
pub fn error_bound(stats: ProblemStats, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    match stats {
        ProblemStats::Normalized => Ok(1.0 / (k as f64 + 1.0)),
        ProblemStats::Unnormalized {
            second_moment_last,
            opt,
        } => {
            if !(opt > 0.0 && second_moment_last >= 0.0) {
                return Err(Error::arg("need OPT > 0 and E[Z_T^2] >= 0"));
            }
            let ratio = second_moment_last / (opt * opt);
            Ok(2.0 * ratio.cbrt() * (k as f64).powf(-1.0 / 3.0) * opt)
        }
    }
}
