//! Finite scenario trees.
//!
//! A tree of horizon `T` has its roots at depth 1 (the possible values of
//! `Y_1`) and all leaves at depth `T`. Nodes are stored parent-first so one
//! forward sweep visits every parent before its children and one reverse
//! sweep does the opposite.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub(crate) const NONE: usize = usize::MAX;

/// Bare topology shared by file-backed trees and sampled scenario trees.
#[derive(Clone, Debug, Default)]
pub(crate) struct Arena {
    pub parent: Vec<usize>,
    /// 1-based depth, i.e. the time index of the node.
    pub depth: Vec<usize>,
    /// Conditional probability of the node given its parent.
    pub prob: Vec<f64>,
    pub leaf: Vec<bool>,
}

impl Arena {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn push(&mut self, parent: usize, depth: usize, prob: f64) -> usize {
        if parent != NONE {
            self.leaf[parent] = false;
        }
        self.parent.push(parent);
        self.depth.push(depth);
        self.prob.push(prob);
        self.leaf.push(true);
        self.parent.len() - 1
    }

    pub fn clear(&mut self) {
        self.parent.clear();
        self.depth.clear();
        self.prob.clear();
        self.leaf.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u64,
    pub parent: Option<u64>,
    pub branch_prob: f64,
    pub payout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<NodeValue>,
}

/// On-disk form of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug)]
pub struct FiniteTreeProcess {
    dim: usize,
    horizon: usize,
    pub(crate) arena: Arena,
    ids: Vec<u64>,
    values: Vec<f64>,
    payout: Vec<f64>,
    path_prob: Vec<f64>,
    child_start: Vec<usize>,
    child_end: Vec<usize>,
    n_roots: usize,
}

const PROB_TOL: f64 = 1e-12;

impl FiniteTreeProcess {
    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        let bad = |m: String| Error::InvalidTree(m);
        if spec.dim == 0 {
            return Err(bad("D must be at least 1".into()));
        }
        if spec.horizon == 0 {
            return Err(bad("T must be at least 1".into()));
        }
        if spec.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        let n = spec.nodes.len();
        let mut index = HashMap::with_capacity(n);
        for (i, node) in spec.nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(bad(format!("duplicate node id {}", node.id)));
            }
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (i, node) in spec.nodes.iter().enumerate() {
            match node.parent {
                None => roots.push(i),
                Some(p) => {
                    let &pi = index
                        .get(&p)
                        .ok_or_else(|| bad(format!("node {} has unknown parent {p}", node.id)))?;
                    kids[pi].push(i);
                }
            }
            if !(node.branch_prob > 0.0 && node.branch_prob <= 1.0 + PROB_TOL) {
                return Err(bad(format!(
                    "node {} has branch_prob {} outside (0, 1]",
                    node.id, node.branch_prob
                )));
            }
            if !(node.payout.is_finite() && node.payout >= 0.0) {
                return Err(bad(format!(
                    "node {} has payout {}; payouts must be finite and nonnegative",
                    node.id, node.payout
                )));
            }
        }
        if roots.is_empty() {
            return Err(bad("no root nodes".into()));
        }

        // breadth-first relabelling keeps siblings contiguous
        let mut order = Vec::with_capacity(n);
        let mut depth_of = vec![0usize; n];
        for &r in &roots {
            depth_of[r] = 1;
            order.push(r);
        }
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            if depth_of[i] > spec.horizon {
                return Err(bad(format!(
                    "node {} lies at depth {} beyond T={}",
                    spec.nodes[i].id, depth_of[i], spec.horizon
                )));
            }
            for &c in &kids[i] {
                depth_of[c] = depth_of[i] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            return Err(bad("some nodes are unreachable from the roots (cycle?)".into()));
        }

        let mut new_of = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_of[old] = new;
        }

        let check_siblings = |group: &[usize], what: &str| -> Result<()> {
            let s: f64 = group.iter().map(|&c| spec.nodes[c].branch_prob).sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(bad(format!("branch probabilities of {what} sum to {s}")));
            }
            Ok(())
        };
        check_siblings(&roots, "the roots")?;

        let mut tree = FiniteTreeProcess {
            dim: spec.dim,
            horizon: spec.horizon,
            arena: Arena::default(),
            ids: Vec::with_capacity(n),
            values: Vec::with_capacity(n * spec.dim),
            payout: Vec::with_capacity(n),
            path_prob: Vec::with_capacity(n),
            child_start: vec![0; n],
            child_end: vec![0; n],
            n_roots: roots.len(),
        };
        let sibling_rank = {
            let mut rank = vec![0usize; n];
            for (r, &i) in roots.iter().enumerate() {
                rank[i] = r;
            }
            for group in &kids {
                for (r, &c) in group.iter().enumerate() {
                    rank[c] = r;
                }
            }
            rank
        };
        for &old in &order {
            let node = &spec.nodes[old];
            let parent = node.parent.map(|p| new_of[index[&p]]).unwrap_or(NONE);
            let d = depth_of[old];
            if kids[old].is_empty() && d != spec.horizon {
                return Err(bad(format!(
                    "leaf {} at depth {d}; every leaf must be at depth T={}",
                    node.id, spec.horizon
                )));
            }
            if !kids[old].is_empty() {
                check_siblings(&kids[old], &format!("the children of node {}", node.id))?;
            }
            let me = tree.arena.push(parent, d, node.branch_prob);
            tree.arena.leaf[me] = kids[old].is_empty();
            tree.ids.push(node.id);
            tree.payout.push(node.payout);
            let pp = if parent == NONE { 1.0 } else { tree.path_prob[parent] };
            tree.path_prob.push(pp * node.branch_prob);
            match &node.value {
                None => {
                    tree.values.push(sibling_rank[old] as f64);
                    tree.values.extend(std::iter::repeat_n(0.0, spec.dim - 1));
                }
                Some(NodeValue::Scalar(v)) if spec.dim == 1 => tree.values.push(*v),
                Some(NodeValue::Vector(v)) if v.len() == spec.dim => tree.values.extend(v),
                Some(_) => {
                    return Err(bad(format!(
                        "node {} has a value of the wrong dimension",
                        node.id
                    )))
                }
            }
            if tree.values[me * spec.dim..].iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("node {} has a non-finite value", node.id)));
            }
            if !kids[old].is_empty() {
                let first = new_of[kids[old][0]];
                tree.child_start[me] = first;
                tree.child_end[me] = first + kids[old].len();
            }
        }
        // prefixes are looked up by value, so siblings must be distinguishable
        for p in std::iter::once(NONE).chain(0..n) {
            let group = tree.children_of(p);
            for a in group.clone() {
                for b in (a + 1)..group.end {
                    if tree.value(a) == tree.value(b) {
                        return Err(bad(format!(
                            "sibling nodes {} and {} carry the same value",
                            tree.ids[a], tree.ids[b]
                        )));
                    }
                }
            }
        }
        Ok(tree)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: TreeSpec =
            serde_json::from_str(s).map_err(|e| Error::InvalidTree(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_spec(&self) -> TreeSpec {
        let nodes = (0..self.len())
            .map(|i| {
                let v = self.value(i);
                NodeSpec {
                    id: self.ids[i],
                    parent: self.parent(i).map(|p| self.ids[p]),
                    branch_prob: self.arena.prob[i],
                    payout: self.payout[i],
                    value: Some(if self.dim == 1 {
                        NodeValue::Scalar(v[0])
                    } else {
                        NodeValue::Vector(v.to_vec())
                    }),
                }
            })
            .collect();
        TreeSpec {
            dim: self.dim,
            horizon: self.horizon,
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("tree spec serializes")
    }

    /// Same topology and values with the payouts replaced.
    pub fn with_payouts(&self, payouts: Vec<f64>) -> Result<Self> {
        if payouts.len() != self.len() {
            return Err(Error::arg("payout vector length differs from node count"));
        }
        if payouts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::arg("payouts must be finite and nonnegative"));
        }
        Ok(FiniteTreeProcess {
            payout: payouts,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn len(&self) -> usize {
        self.arena.len()
    }
    pub fn is_empty(&self) -> bool {
        self.arena.len() == 0
    }
    pub fn roots(&self) -> std::ops::Range<usize> {
        0..self.n_roots
    }
    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }
    pub fn parent(&self, i: usize) -> Option<usize> {
        let p = self.arena.parent[i];
        (p != NONE).then_some(p)
    }
    pub fn depth(&self, i: usize) -> usize {
        self.arena.depth[i]
    }
    pub fn is_leaf(&self, i: usize) -> bool {
        self.arena.leaf[i]
    }
    pub fn children(&self, i: usize) -> std::ops::Range<usize> {
        self.child_start[i]..self.child_end[i]
    }
    fn children_of(&self, i: usize) -> std::ops::Range<usize> {
        if i == NONE {
            self.roots()
        } else {
            self.children(i)
        }
    }
    pub fn branch_prob(&self, i: usize) -> f64 {
        self.arena.prob[i]
    }
    pub fn path_prob(&self, i: usize) -> f64 {
        self.path_prob[i]
    }
    pub fn payout(&self, i: usize) -> f64 {
        self.payout[i]
    }
    pub fn payouts(&self) -> &[f64] {
        &self.payout
    }
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.arena.leaf[i])
    }
    pub fn max_payout(&self) -> f64 {
        self.payout.iter().copied().fold(0.0, f64::max)
    }

    /// Column-major path values `Y_1..Y_t` ending at node `i`.
    pub fn path_to(&self, i: usize) -> Vec<f64> {
        let mut chain = vec![i];
        while let Some(p) = self.parent(*chain.last().unwrap()) {
            chain.push(p);
        }
        chain.iter().rev().flat_map(|&n| self.value(n).to_vec()).collect()
    }

    /// Node reached by the first `t` columns of `path`.
    pub fn locate(&self, path: &[f64], t: usize) -> Option<usize> {
        if t == 0 || t > self.horizon || path.len() < t * self.dim {
            return None;
        }
        let mut group = self.roots();
        let mut found = None;
        for s in 0..t {
            let col = &path[s * self.dim..(s + 1) * self.dim];
            let hit = group.clone().find(|&c| self.value(c) == col)?;
            found = Some(hit);
            group = self.children(hit);
        }
        found
    }

    fn pick(&self, group: std::ops::Range<usize>, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in group.clone() {
            acc += self.arena.prob[c];
            if u < acc {
                return c;
            }
        }
        group.end - 1
    }

    /// Fills columns `t+1..=T` of `path` by walking down from the prefix node.
    pub fn complete_path(&self, path: &mut [f64], t: usize, rng: &mut StreamRng) -> Result<()> {
        let d = self.dim;
        let mut node = if t == 0 {
            None
        } else {
            Some(self.locate(path, t).ok_or(Error::OutsideSupport { t })?)
        };
        for s in t..self.horizon {
            let group = node.map(|n| self.children(n)).unwrap_or(self.roots());
            let c = self.pick(group, rng);
            path[s * d..(s + 1) * d].copy_from_slice(self.value(c));
            node = Some(c);
        }
        Ok(())
    }

    /// Payout at the node reached by the first `t` columns.
    pub fn payout_at(&self, t: usize, path: &[f64]) -> Result<f64> {
        self.locate(path, t)
            .map(|i| self.payout[i])
            .ok_or(Error::OutsideSupport { t })
    }

    /// `Y_1 = 1/n`, `Y_2 = 1` with probability `1/n` and 0 otherwise; payout `Y`.
    pub fn two_point(n: f64) -> Result<Self> {
        if !(n.is_finite() && n >= 1.0) {
            return Err(Error::arg(format!("two_point needs n >= 1, got {n}")));
        }
        let p = 1.0 / n;
        let mut b = TreeBuilder::new(1, 2);
        let r = b.root(&[p], 1.0, p);
        b.child(r, &[1.0], p, 1.0);
        if p < 1.0 {
            b.child(r, &[0.0], 1.0 - p, 0.0);
        }
        b.build()
    }

    /// Deterministic `Y_1 = 0, Y_2 = 1`, then `Y_3` is 1/2 or 1 with equal odds.
    /// Every expansion term vanishes here yet the threshold rule with
    /// threshold 0 is optimal while a strict positive threshold is not.
    pub fn not_sure_example() -> Self {
        let mut b = TreeBuilder::new(1, 3);
        let r = b.root(&[0.0], 1.0, 0.0);
        let m = b.child(r, &[1.0], 1.0, 1.0);
        b.child(m, &[0.5], 0.5, 0.5);
        b.child(m, &[1.0], 0.5, 1.0);
        b.build().expect("static tree is valid")
    }

    /// Two-period tree `Y_1 = first`, `Y_2` on the given support; payout `Y`.
    pub fn two_period(first: f64, support: &[(f64, f64)]) -> Result<Self> {
        let mut b = TreeBuilder::new(1, 2);
        let r = b.root(&[first], 1.0, first);
        for &(v, p) in support {
            b.child(r, &[v], p, v);
        }
        b.build()
    }

    /// Random tree with payouts in `[0, scale]`, handy for property tests.
    pub fn random(rng: &mut StreamRng, cfg: &RandomTreeConfig) -> Self {
        let mut b = TreeBuilder::new(1, cfg.horizon);
        fn probs(rng: &mut StreamRng, k: usize) -> Vec<f64> {
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let head: f64 = p[..k - 1].iter().sum();
            p[k - 1] = 1.0 - head;
            p
        }
        let mut frontier = Vec::new();
        let nr = rng.random_range(1..=cfg.max_roots.max(1));
        for (j, p) in probs(rng, nr).into_iter().enumerate() {
            let z = cfg.scale * rng.random::<f64>();
            frontier.push(b.root(&[j as f64], p, z));
        }
        for _ in 1..cfg.horizon {
            let mut next = Vec::new();
            for &node in &frontier {
                let nc = rng.random_range(1..=cfg.max_branching.max(1));
                for (j, p) in probs(rng, nc).into_iter().enumerate() {
                    let z = cfg.scale * rng.random::<f64>();
                    next.push(b.child(node, &[j as f64], p, z));
                }
            }
            frontier = next;
        }
        b.build().expect("generated tree is valid")
    }
}

#[derive(Clone, Debug)]
pub struct RandomTreeConfig {
    pub horizon: usize,
    pub max_roots: usize,
    pub max_branching: usize,
    pub scale: f64,
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        RandomTreeConfig {
            horizon: 3,
            max_roots: 2,
            max_branching: 3,
            scale: 1.0,
        }
    }
}

/// Incremental construction with automatically numbered ids.
pub struct TreeBuilder {
    spec: TreeSpec,
}

impl TreeBuilder {
    pub fn new(dim: usize, horizon: usize) -> Self {
        TreeBuilder {
            spec: TreeSpec {
                dim,
                horizon,
                nodes: Vec::new(),
            },
        }
    }

    fn add(&mut self, parent: Option<u64>, value: &[f64], prob: f64, payout: f64) -> u64 {
        let id = self.spec.nodes.len() as u64;
        let value = if value.len() == 1 {
            NodeValue::Scalar(value[0])
        } else {
            NodeValue::Vector(value.to_vec())
        };
        self.spec.nodes.push(NodeSpec {
            id,
            parent,
            branch_prob: prob,
            payout,
            value: Some(value),
        });
        id
    }

    pub fn root(&mut self, value: &[f64], prob: f64, payout: f64) -> u64 {
        self.add(None, value, prob, payout)
    }

    pub fn child(&mut self, parent: u64, value: &[f64], prob: f64, payout: f64) -> u64 {
        self.add(Some(parent), value, prob, payout)
    }

    pub fn build(self) -> Result<FiniteTreeProcess> {
        FiniteTreeProcess::from_spec(&self.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn json_round_trip_and_lookup() {
        let t = FiniteTreeProcess::two_point(4.0).unwrap();
        let back = FiniteTreeProcess::from_json_str(&t.to_json()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.payout_at(2, &[0.25, 1.0]).unwrap(), 1.0);
        assert!(matches!(
            back.payout_at(2, &[0.25, 0.5]),
            Err(Error::OutsideSupport { t: 2 })
        ));
    }

    #[test]
    fn default_values_are_sibling_ordinals() {
        let json = r#"{"D":1,"T":2,"nodes":[
            {"id":10,"parent":null,"branch_prob":1.0,"payout":0.3},
            {"id":11,"parent":10,"branch_prob":0.25,"payout":1.0},
            {"id":12,"parent":10,"branch_prob":0.75,"payout":0.0}]}"#;
        let t = FiniteTreeProcess::from_json_str(json).unwrap();
        assert_eq!(t.payout_at(2, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(t.path_prob(t.locate(&[0.0, 0.0], 2).unwrap()), 0.25);
    }

    #[test]
    fn rejects_bad_probabilities_and_short_leaves() {
        let json = r#"{"D":1,"T":2,"nodes":[
            {"id":1,"parent":null,"branch_prob":1.0,"payout":0.3},
            {"id":2,"parent":1,"branch_prob":0.5,"payout":1.0},
            {"id":3,"parent":1,"branch_prob":0.4,"payout":0.0}]}"#;
        assert!(matches!(
            FiniteTreeProcess::from_json_str(json),
            Err(Error::InvalidTree(_))
        ));
        let json = r#"{"D":1,"T":3,"nodes":[
            {"id":1,"parent":null,"branch_prob":1.0,"payout":0.3},
            {"id":2,"parent":1,"branch_prob":1.0,"payout":1.0}]}"#;
        assert!(matches!(
            FiniteTreeProcess::from_json_str(json),
            Err(Error::InvalidTree(_))
        ));
        let json = r#"{"D":1,"T":1,"nodes":[
            {"id":1,"parent":2,"branch_prob":1.0,"payout":0.3},
            {"id":2,"parent":1,"branch_prob":1.0,"payout":1.0}]}"#;
        assert!(FiniteTreeProcess::from_json_str(json).is_err());
    }

    #[test]
    fn sampling_follows_branch_probabilities() {
        let t = FiniteTreeProcess::two_point(4.0).unwrap();
        let key = StreamKey::master(3);
        let mut hits = 0;
        let n = 40_000;
        for i in 0..n {
            let mut path = [0.0; 2];
            t.complete_path(&mut path, 0, &mut key.child(i).rng()).unwrap();
            assert_eq!(path[0], 0.25);
            if path[1] == 1.0 {
                hits += 1;
            }
        }
        let f = hits as f64 / n as f64;
        assert!((f - 0.25).abs() < 0.01, "{f}");
    }

    #[test]
    fn random_trees_are_valid() {
        let key = StreamKey::master(11);
        for i in 0..50 {
            let t = FiniteTreeProcess::random(&mut key.child(i).rng(), &RandomTreeConfig::default());
            let total: f64 = t.leaves().map(|l| t.path_prob(l)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for l in t.leaves() {
                assert_eq!(t.locate(&t.path_to(l), t.horizon()), Some(l));
            }
        }
    }
}
