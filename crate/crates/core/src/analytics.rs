//! Closed-form recursions for the special examples, used as golden values.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::FiniteTreeProcess;

/// `OPT - E_k = (1/n)(1 - 1/n)^k` for the two-point example.
pub fn two_point_gap(n: f64, k: usize) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(Error::arg(format!("two_point_gap needs n >= 2, got {n}")));
    }
    Ok((1.0 / n) * (1.0 - 1.0 / n).powi(k as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecursionTrace {
    pub name: &'static str,
    /// `values[k-1]` is the `k`-th term.
    pub values: Vec<f64>,
    /// `gap[k-1] = OPT - E_k`.
    pub gap: Vec<f64>,
}

/// `c_1 = 1`, `c_{k+1} = c_k e^{-c_k}`; gap `c_{k+1}` (exponential, balanced means).
pub fn expo_balanced_seq(levels: usize) -> RecursionTrace {
    let mut c = vec![1.0f64];
    for _ in 0..levels {
        let x = *c.last().unwrap();
        c.push(x * (-x).exp());
    }
    RecursionTrace {
        name: "expo_balanced",
        gap: c[1..].to_vec(),
        values: c[..levels].to_vec(),
    }
}

/// `z_1 = 1/2`, `z_{k+1} = (z_k + 1/2) e^{-z_k} - 1/2`; gap `z_{k+1}` (exponential, unbalanced means).
pub fn expo_unbalanced_seq(levels: usize) -> RecursionTrace {
    let mut z = vec![0.5f64];
    for _ in 0..levels {
        let x = *z.last().unwrap();
        // (x + 1/2) e^{-x} - 1/2 loses every digit once x is tiny
        z.push(x * (-x).exp() + 0.5 * (-x).exp_m1());
    }
    RecursionTrace {
        name: "expo_unbalanced",
        gap: z[1..].to_vec(),
        values: z[..levels].to_vec(),
    }
}

/// `b_1 = 1`, `b_{k+1} = b_k (1 - b_k/2)`; gap `b_{k+1}^2` (uniform, balanced means).
pub fn uniform_balanced_seq(levels: usize) -> RecursionTrace {
    let mut b = vec![1.0f64];
    for _ in 0..levels {
        let x = *b.last().unwrap();
        b.push(x * (1.0 - x / 2.0));
    }
    RecursionTrace {
        name: "uniform_balanced",
        gap: b[1..].iter().map(|x| x * x).collect(),
        values: b[..levels].to_vec(),
    }
}

/// `a_k = 2 b_k`, the scale of the uniform part of `Z^k_2` in the uniform example.
pub fn uniform_balanced_a(levels: usize) -> Vec<f64> {
    uniform_balanced_seq(levels).values.iter().map(|b| 2.0 * b).collect()
}

/// Value of minimizing over `T` i.i.d. uniforms: `OPT(1) = 1/2`,
/// `OPT(T+1) = OPT(T) - OPT(T)^2 / 2`.
pub fn iid_uniform_opt(horizon: usize) -> Result<f64> {
    Ok(*iid_uniform_opt_seq(horizon)?.last().unwrap())
}

/// `OPT(1..=T)`.
pub fn iid_uniform_opt_seq(horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::arg("T must be at least 1"));
    }
    let mut v = Vec::with_capacity(horizon);
    let mut y = 0.5f64;
    v.push(y);
    for _ in 1..horizon {
        y -= 0.5 * y * y;
        v.push(y);
    }
    Ok(v)
}

/// Squared-payout recursion `y_1 = 1/3`, `y_{t+1} = y_t - (2/3) y_t^{3/2}`.
pub fn iid_uniform_sq_opt_seq(horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::arg("t must be at least 1"));
    }
    let mut v = Vec::with_capacity(horizon);
    let mut y = 1.0f64 / 3.0;
    v.push(y);
    for _ in 1..horizon {
        y -= 2.0 / 3.0 * y.powf(1.5);
        v.push(y);
    }
    Ok(v)
}

pub fn iid_uniform_sq_opt(t: usize) -> Result<f64> {
    Ok(*iid_uniform_sq_opt_seq(t)?.last().unwrap())
}

/// Two-period tree with `Y_1 = first` and `Y_2` uniform on `[0, hi]`
/// replaced by `points` equally likely grid midpoints.
pub fn uniform_grid_tree(first: f64, hi: f64, points: usize) -> Result<FiniteTreeProcess> {
    if points == 0 {
        return Err(Error::arg("grid needs at least one point"));
    }
    let p = 1.0 / points as f64;
    let support: Vec<(f64, f64)> = (0..points)
        .map(|i| (hi * (i as f64 + 0.5) * p, p))
        .collect();
    FiniteTreeProcess::two_period(first, &fix_last(support))
}

/// Two-period tree with `Y_2 ~ Expo(1)` replaced by `points` equal-mass
/// cells, each represented by its conditional mean.
pub fn exponential_grid_tree(first: f64, points: usize) -> Result<FiniteTreeProcess> {
    if points == 0 {
        return Err(Error::arg("grid needs at least one point"));
    }
    let p = 1.0 / points as f64;
    // E[X; a < X < b] = (a + 1) e^{-a} - (b + 1) e^{-b}
    let tail = |q: f64| -> f64 {
        if q <= 0.0 {
            0.0
        } else {
            let x = -q.ln();
            (x + 1.0) * q
        }
    };
    let support: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let hi_q = 1.0 - i as f64 * p;
            let lo_q = 1.0 - (i + 1) as f64 * p;
            ((tail(hi_q) - tail(lo_q)) / p, p)
        })
        .collect();
    FiniteTreeProcess::two_period(first, &fix_last(support))
}

fn fix_last(mut support: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let head: f64 = support[..support.len() - 1].iter().map(|s| s.1).sum();
    support.last_mut().unwrap().1 = 1.0 - head;
    support
}
