//! Independent references for exact values on finite trees: backward
//! induction, exhaustive enumeration of stopping rules, and the max-flow
//! formulation whose flows are dual martingales.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exact::LevelValues;
use crate::process::Framework;
use crate::tree::FiniteTreeProcess;

#[derive(Clone, Debug)]
pub struct DpSolution {
    pub opt: f64,
    /// Value of the problem started at each node.
    pub value: Vec<f64>,
    /// Whether stopping at the node is optimal.
    pub stop: Vec<bool>,
}

pub fn backward_induction(tree: &FiniteTreeProcess, framework: Framework) -> Result<DpSolution> {
    let n = tree.len();
    let mut cont = vec![0.0; n];
    let mut value = vec![0.0; n];
    let mut stop = vec![false; n];
    let mut opt = 0.0;
    for i in (0..n).rev() {
        let z = tree.payout(i);
        if tree.is_leaf(i) {
            value[i] = z;
            stop[i] = true;
        } else {
            let c = cont[i];
            let (v, s) = match framework {
                Framework::Minimize => (z.min(c), z <= c),
                Framework::Maximize => (z.max(c), z >= c),
            };
            value[i] = v;
            stop[i] = s;
        }
        let w = tree.branch_prob(i) * value[i];
        match tree.parent(i) {
            Some(p) => cont[p] += w,
            None => opt += w,
        }
    }
    Ok(DpSolution { opt, value, stop })
}

/// Number of distinct adapted stopping rules, as a float to survive overflow.
pub fn count_rules(tree: &FiniteTreeProcess) -> f64 {
    let n = tree.len();
    let mut r = vec![1.0f64; n];
    for i in (0..n).rev() {
        if !tree.is_leaf(i) {
            r[i] = 1.0 + tree.children(i).map(|c| r[c]).product::<f64>();
        }
    }
    tree.roots().map(|c| r[c]).product()
}

pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Best value over every adapted stopping rule, by enumeration.
pub fn brute_force_opt(tree: &FiniteTreeProcess, framework: Framework) -> Result<f64> {
    let rules = count_rules(tree);
    if rules > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{rules:.3e} stopping rules exceed the enumeration limit of {BRUTE_FORCE_LIMIT:e}"
        )));
    }
    // values[i]: contribution of every rule restricted to the subtree of i
    let n = tree.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
    let combine = |groups: &mut dyn Iterator<Item = &Vec<f64>>| -> Vec<f64> {
        let mut acc = vec![0.0];
        for g in groups {
            let mut next = Vec::with_capacity(acc.len() * g.len());
            for a in &acc {
                for b in g {
                    next.push(a + b);
                }
            }
            acc = next;
        }
        acc
    };
    for i in (0..n).rev() {
        let here = tree.payout(i) * tree.path_prob(i);
        let mut v = vec![here];
        if !tree.is_leaf(i) {
            let kids: Vec<&Vec<f64>> = tree.children(i).map(|c| &values[c]).collect();
            v.extend(combine(&mut kids.into_iter()));
        }
        values[i] = v;
        for c in tree.children(i) {
            values[c] = Vec::new();
        }
    }
    let roots: Vec<&Vec<f64>> = tree.roots().map(|r| &values[r]).collect();
    let all = combine(&mut roots.into_iter());
    Ok(match framework {
        Framework::Minimize => all.into_iter().fold(f64::INFINITY, f64::min),
        Framework::Maximize => all.into_iter().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Network with one edge into every node (from its parent, or from the
/// source for roots) of capacity `Z(node) P(node)`, and an unbounded edge
/// from every leaf to the sink.
#[derive(Clone, Debug)]
pub struct FlowNetwork<'a> {
    tree: &'a FiniteTreeProcess,
    capacity: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Flow {
    pub value: f64,
    /// Flow on the edge into each node.
    pub edge: Vec<f64>,
}

impl<'a> FlowNetwork<'a> {
    pub fn from_tree(tree: &'a FiniteTreeProcess) -> Self {
        Self::with_payouts(tree, tree.payouts())
    }

    /// Same network with capacities `payouts[i] P(i)`.
    pub fn with_payouts(tree: &'a FiniteTreeProcess, payouts: &[f64]) -> Self {
        let capacity = (0..tree.len())
            .map(|i| payouts[i] * tree.path_prob(i))
            .collect();
        FlowNetwork { tree, capacity }
    }

    pub fn capacity(&self) -> &[f64] {
        &self.capacity
    }

    pub fn tree(&self) -> &FiniteTreeProcess {
        self.tree
    }

    /// Checks capacity and conservation constraints.
    pub fn check_feasible(&self, flow: &Flow, tol: f64) -> Result<()> {
        let t = self.tree;
        for i in 0..t.len() {
            let f = flow.edge[i];
            if f < -tol || f > self.capacity[i] + tol {
                return Err(Error::invariant(format!(
                    "flow {f} on edge into node {} outside [0, {}]",
                    t.id(i),
                    self.capacity[i]
                )));
            }
            if !t.is_leaf(i) {
                let out: f64 = t.children(i).map(|c| flow.edge[c]).sum();
                if (out - f).abs() > tol {
                    return Err(Error::invariant(format!(
                        "flow not conserved at node {}: in {f}, out {out}",
                        t.id(i)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes where a path first meets a saturated edge; they form a minimum cut.
    pub fn min_cut(&self, flow: &Flow, tol: f64) -> Vec<bool> {
        let t = self.tree;
        let mut cut = vec![false; t.len()];
        let mut covered = vec![false; t.len()];
        for i in 0..t.len() {
            let above = t.parent(i).is_some_and(|p| covered[p]);
            let sat = self.capacity[i] - flow.edge[i] <= tol;
            cut[i] = sat && !above;
            covered[i] = above || sat;
        }
        cut
    }

    /// Tab-separated `from to capacity flow` lines; `s` and `t` are the
    /// source and sink, other endpoints are node ids.
    pub fn to_edge_list(&self, flow: Option<&Flow>) -> String {
        let t = self.tree;
        let mut out = String::from("from\tto\tcapacity\tflow\n");
        let fl = |i: usize| flow.map(|f| f.edge[i]).unwrap_or(0.0);
        for i in 0..t.len() {
            let from = match t.parent(i) {
                Some(p) => t.id(p).to_string(),
                None => "s".to_string(),
            };
            let _ = writeln!(out, "{from}\t{}\t{:e}\t{:e}", t.id(i), self.capacity[i], fl(i));
        }
        for i in t.leaves() {
            let _ = writeln!(out, "{}\tt\tinf\t{:e}", t.id(i), fl(i));
        }
        out
    }
}

/// Maximum flow. On a tree the most that can pass through a node's edge is
/// the smaller of its capacity and what its subtree can absorb; pushing that
/// down and splitting it in proportion to each child's absorbable amount
/// gives a blocking flow.
pub fn max_flow(net: &FlowNetwork) -> Flow {
    let t = net.tree;
    let n = t.len();
    let mut absorb = vec![0.0; n];
    let mut below = vec![0.0; n];
    for i in (0..n).rev() {
        absorb[i] = if t.is_leaf(i) {
            net.capacity[i]
        } else {
            net.capacity[i].min(below[i])
        };
        if let Some(p) = t.parent(i) {
            below[p] += absorb[i];
        }
    }
    let mut edge = vec![0.0; n];
    for r in t.roots() {
        edge[r] = absorb[r];
    }
    for i in 0..n {
        if t.is_leaf(i) || below[i] <= 0.0 {
            continue;
        }
        let scale = edge[i] / below[i];
        for c in t.children(i) {
            edge[c] = absorb[c] * scale;
        }
    }
    let value = t.roots().map(|r| edge[r]).sum();
    Flow { value, edge }
}

/// Martingale `M = F / P` of a flow, validated as a dual certificate:
/// the tower property holds, `M <= Z`, and `M = Z` somewhere on every path.
pub fn flow_to_martingale(net: &FlowNetwork, flow: &Flow) -> Result<Vec<f64>> {
    let t = net.tree;
    let scale = t.max_payout().max(1.0);
    let tol = 1e-12 * scale;
    net.check_feasible(flow, tol)?;
    let m: Vec<f64> = (0..t.len()).map(|i| flow.edge[i] / t.path_prob(i)).collect();
    for i in 0..t.len() {
        let z = net.capacity[i] / t.path_prob(i);
        if m[i] > z + tol {
            return Err(Error::invariant(format!("M exceeds Z at node {}", t.id(i))));
        }
        if !t.is_leaf(i) {
            let avg: f64 = t.children(i).map(|c| t.branch_prob(c) * m[c]).sum();
            if (avg - m[i]).abs() > 1e-10 * scale {
                return Err(Error::invariant(format!(
                    "tower property fails at node {}",
                    t.id(i)
                )));
            }
        }
    }
    let cut = net.min_cut(flow, tol);
    let mut covered = vec![false; t.len()];
    for i in 0..t.len() {
        covered[i] = cut[i] || t.parent(i).is_some_and(|p| covered[p]);
        if t.is_leaf(i) && !covered[i] {
            return Err(Error::invariant(format!(
                "path to leaf {} has no saturated edge",
                t.id(i)
            )));
        }
    }
    Ok(m)
}

/// Round-`k` flow of the expansion: `E[min Z^k | F_t] P` on the edge into
/// each node, feasible for capacities `Z^k P`.
pub fn round_flow(tree: &FiniteTreeProcess, levels: &LevelValues, k: usize) -> Result<Flow> {
    if k == 0 || k > levels.levels() {
        return Err(Error::arg(format!("round {k} not computed")));
    }
    if levels.min_horizon() != tree.horizon() {
        return Err(Error::arg("round flows need the standard expansion"));
    }
    let m = levels.cond_min(k);
    let edge: Vec<f64> = (0..tree.len()).map(|i| m[i] * tree.path_prob(i)).collect();
    Ok(Flow {
        value: levels.h(k),
        edge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_levels;
    use crate::rng::StreamKey;
    use crate::tree::RandomTreeConfig;

    #[test]
    fn two_point_values() {
        let t = FiniteTreeProcess::two_point(4.0).unwrap();
        let dp = backward_induction(&t, Framework::Minimize).unwrap();
        assert_eq!(dp.opt, 0.25);
        assert_eq!(brute_force_opt(&t, Framework::Minimize).unwrap(), 0.25);
        let net = FlowNetwork::from_tree(&t);
        let f = max_flow(&net);
        assert!((f.value - 0.25).abs() < 1e-15);
        let m = flow_to_martingale(&net, &f).unwrap();
        assert!((m[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rule_count_small_tree() {
        // root with two leaves: stop at root, or continue
        let t = FiniteTreeProcess::two_point(4.0).unwrap();
        assert_eq!(count_rules(&t), 2.0);
        let t = FiniteTreeProcess::not_sure_example();
        assert_eq!(count_rules(&t), 3.0);
    }

    #[test]
    fn brute_force_agrees_with_dp_and_flow() {
        let key = StreamKey::master(21);
        for i in 0..40 {
            let t = FiniteTreeProcess::random(&mut key.child(i).rng(), &RandomTreeConfig::default());
            for fw in [Framework::Minimize, Framework::Maximize] {
                let dp = backward_induction(&t, fw).unwrap().opt;
                let bf = brute_force_opt(&t, fw).unwrap();
                assert!((dp - bf).abs() < 1e-12);
            }
            let net = FlowNetwork::from_tree(&t);
            let f = max_flow(&net);
            let dp = backward_induction(&t, Framework::Minimize).unwrap().opt;
            assert!((f.value - dp).abs() < 1e-12);
            flow_to_martingale(&net, &f).unwrap();
            // the cut is itself an optimal stopping rule
            let cut = net.min_cut(&f, 1e-12);
            let v: f64 = (0..t.len())
                .filter(|&i| cut[i])
                .map(|i| net.capacity()[i])
                .sum();
            assert!((v - dp).abs() < 1e-12);
        }
    }

    #[test]
    fn round_flows_are_feasible() {
        let key = StreamKey::master(22);
        for i in 0..20 {
            let t = FiniteTreeProcess::random(&mut key.child(i).rng(), &RandomTreeConfig::default());
            let lv = exact_levels(&t, 6).unwrap();
            for k in 1..=6 {
                let f = round_flow(&t, &lv, k).unwrap();
                let net = FlowNetwork::with_payouts(&t, lv.z(k));
                net.check_feasible(&f, 1e-12).unwrap();
            }
        }
    }

    #[test]
    fn edge_list_has_sink_edges() {
        let t = FiniteTreeProcess::two_point(2.0).unwrap();
        let net = FlowNetwork::from_tree(&t);
        let s = net.to_edge_list(Some(&max_flow(&net)));
        assert_eq!(s.lines().count(), 1 + 3 + 2);
        assert!(s.contains("\tt\tinf\t"));
    }
}
