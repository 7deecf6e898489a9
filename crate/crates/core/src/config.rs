//! Points of the active polytope and optimal transport between them.
//!
//! A [`Configuration`] stores, for every active non-root node `u`, the
//! conditional probability `x_u / x_{p(u)}` and the absolute subtree mass
//! `x_u`. Conditionals are the primary representation; absolute masses are
//! products along the root path and are flushed to zero below
//! [`MASS_FLUSH`].
//!
//! On a tree, optimal transport reduces to the sum over edges of the net
//! flow, `Σ_u |x'_u - x_u|`, with masses extended by zero outside each
//! configuration's support.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LgtError, Result};
use crate::tree::{HeightProfile, LayeredTree, NodeId};

/// Tolerance for polytope membership and marginal checks.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Tolerance when comparing against an independent oracle.
pub const ORACLE_TOL: f64 = 1e-8;
/// Absolute masses below this are treated as exactly zero.
pub const MASS_FLUSH: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    layer: usize,
    support: Vec<NodeId>,
    cond: Vec<f64>,
    abs: Vec<f64>,
}

impl Configuration {
    /// The configuration at layer 0: all mass on the root.
    pub fn root_only() -> Self {
        Self {
            layer: 0,
            support: Vec::new(),
            cond: vec![1.0],
            abs: vec![1.0],
        }
    }

    /// Builds a configuration from per-node conditionals (indexed by node,
    /// only active non-root entries are read).
    pub fn from_conditionals(tree: &LayeredTree, cond: Vec<f64>) -> Self {
        let n = tree.len();
        let mut cond = cond;
        cond.resize(n, 0.0);
        let mut abs = vec![0.0; n];
        abs[0] = 1.0;
        cond[0] = 1.0;
        let order = tree.active_preorder();
        for &u in &order[1..] {
            let p = tree.parent(u).expect("non-root");
            let m = abs[p.index()] * cond[u.index()];
            abs[u.index()] = if m < MASS_FLUSH { 0.0 } else { m };
        }
        Self {
            layer: tree.current_layer(),
            support: order[1..].to_vec(),
            cond,
            abs,
        }
    }

    /// Builds a configuration from masses on the current leaves; internal
    /// masses are subtree sums.
    pub fn from_leaf_masses(tree: &LayeredTree, masses: &[(NodeId, f64)]) -> Result<Self> {
        let n = tree.len();
        let mut abs = vec![0.0; n];
        for &(leaf, m) in masses {
            if !tree.contains(leaf) || !tree.is_leaf(leaf) {
                return Err(LgtError::Contract(format!("{leaf} is not an active leaf")));
            }
            if !(m >= 0.0) {
                return Err(LgtError::Contract(format!("negative mass {m} on {leaf}")));
            }
            abs[leaf.index()] = m;
        }
        let order = tree.active_preorder();
        for &u in order[1..].iter().rev() {
            let p = tree.parent(u).expect("non-root");
            abs[p.index()] += abs[u.index()];
        }
        if (abs[0] - 1.0).abs() > CONSTRAINT_TOL {
            return Err(LgtError::Contract(format!("leaf masses sum to {}", abs[0])));
        }
        abs[0] = 1.0;
        let mut cond = vec![0.0; n];
        cond[0] = 1.0;
        for &u in &order[1..] {
            let p = tree.parent(u).expect("non-root");
            let pm = abs[p.index()];
            cond[u.index()] = if pm > 0.0 { abs[u.index()] / pm } else { 0.0 };
        }
        for m in abs.iter_mut() {
            if *m < MASS_FLUSH {
                *m = 0.0;
            }
        }
        Ok(Self {
            layer: tree.current_layer(),
            support: order[1..].to_vec(),
            cond,
            abs,
        })
    }

    /// All mass on one current leaf.
    pub fn point_mass(tree: &LayeredTree, leaf: NodeId) -> Result<Self> {
        Self::from_leaf_masses(tree, &[(leaf, 1.0)])
    }

    /// Layer whose leaves carry the distribution.
    pub fn layer(&self) -> usize {
        self.layer
    }

    /// Active non-root nodes at construction time, in preorder.
    pub fn support(&self) -> &[NodeId] {
        &self.support
    }

    /// Absolute subtree mass `x_u` (0 outside the support).
    #[inline]
    pub fn mass(&self, u: NodeId) -> f64 {
        self.abs.get(u.index()).copied().unwrap_or(0.0)
    }

    /// Conditional `x_u / x_{p(u)}` (0 outside the support).
    #[inline]
    pub fn cond(&self, u: NodeId) -> f64 {
        self.cond.get(u.index()).copied().unwrap_or(0.0)
    }

    /// Masses on the distribution layer, in preorder.
    pub fn leaf_masses(&self, tree: &LayeredTree) -> Vec<(NodeId, f64)> {
        if self.layer == 0 {
            return vec![(NodeId::ROOT, 1.0)];
        }
        self.support
            .iter()
            .copied()
            .filter(|&u| tree.layer_of(u) == self.layer)
            .map(|u| (u, self.mass(u)))
            .collect()
    }

    /// Membership in the active polytope of `tree` (which must be at this
    /// configuration's layer), plus consistency of conditionals and masses.
    pub fn validate(&self, tree: &LayeredTree) -> Result<()> {
        if tree.current_layer() != self.layer {
            return Err(LgtError::Contract(format!(
                "configuration on layer {} checked against tree at layer {}",
                self.layer,
                tree.current_layer()
            )));
        }
        for p in tree.active_preorder() {
            if tree.is_leaf(p) {
                continue;
            }
            let (mut sc, mut sm) = (0.0, 0.0);
            for v in tree.active_children(p) {
                sc += self.cond(v);
                sm += self.mass(v);
            }
            if (sc - 1.0).abs() > CONSTRAINT_TOL {
                return Err(LgtError::Contract(format!("conditionals below {p} sum to {sc}")));
            }
            if (sm - self.mass(p)).abs() > CONSTRAINT_TOL {
                return Err(LgtError::Contract(format!(
                    "flow violated at {p}: {} vs children {sm}",
                    self.mass(p)
                )));
            }
            for v in tree.active_children(p) {
                let expect = self.mass(p) * self.cond(v);
                if (expect - self.mass(v)).abs() > CONSTRAINT_TOL {
                    return Err(LgtError::Contract(format!("mass of {v} disagrees with its conditional")));
                }
            }
        }
        Ok(())
    }
}

/// `Φ = Σ_u x_u ln x_u` over the active non-root nodes.
///
/// The heights are only used to reject inconsistent profiles; on the
/// polytope the value equals [`conditional_entropy`] with integer heights.
pub fn entropy_value(cfg: &Configuration, heights: &HeightProfile, tree: &LayeredTree) -> Result<f64> {
    heights.validate(tree)?;
    Ok(plain_entropy(cfg))
}

pub(crate) fn plain_entropy(cfg: &Configuration) -> f64 {
    cfg.support()
        .iter()
        .map(|&u| cfg.mass(u))
        .filter(|&m| m > 0.0)
        .map(|m| m * m.ln())
        .sum()
}

/// `Σ_u h_{p(u)} x_u ln(x_u / x_{p(u)})` over the support.
pub fn conditional_entropy(cfg: &Configuration, heights: &HeightProfile, tree: &LayeredTree) -> f64 {
    cfg.support()
        .iter()
        .filter(|&&u| cfg.mass(u) > 0.0)
        .map(|&u| {
            let p = tree.parent(u).expect("non-root");
            heights.get(p) * cfg.mass(u) * cfg.cond(u).ln()
        })
        .sum()
}

/// Tree earth-mover distance `Σ_u |x'_u - x_u|` over the union of supports.
pub fn ot_cost(a: &Configuration, b: &Configuration) -> f64 {
    let len = a.abs.len().max(b.abs.len());
    let mut seen = vec![false; len];
    let mut total = 0.0;
    for &u in a.support().iter().chain(b.support()) {
        if std::mem::replace(&mut seen[u.index()], true) {
            continue;
        }
        total += (a.mass(u) - b.mass(u)).abs();
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub from: NodeId,
    pub to: NodeId,
    pub mass: f64,
    pub distance: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub moves: Vec<Move>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn outgoing(&self, from: NodeId) -> impl Iterator<Item = &Move> {
        self.moves.iter().filter(move |m| m.from == from)
    }

    /// (outgoing per source, incoming per target).
    pub fn marginals(&self) -> (BTreeMap<NodeId, f64>, BTreeMap<NodeId, f64>) {
        let mut out = BTreeMap::new();
        let mut inc = BTreeMap::new();
        for m in &self.moves {
            *out.entry(m.from).or_insert(0.0) += m.mass;
            *inc.entry(m.to).or_insert(0.0) += m.mass;
        }
        (out, inc)
    }
}

/// Canonical optimal coupling between the leaf distributions of two
/// configurations on the same tree.
///
/// One bottom-up pass: each node pools the surplus (source mass) and deficit
/// (target mass) exported by its children, taken in ascending order, cancels
/// them greedily, and exports the remainder through its parent edge. Mass
/// therefore never crosses an edge in both directions, so the plan is optimal.
pub fn ot_coupling(a: &Configuration, b: &Configuration, tree: &LayeredTree) -> Result<TransportPlan> {
    let sources: Vec<(NodeId, f64)> = a.leaf_masses(tree).into_iter().filter(|&(_, m)| m > 0.0).collect();
    let targets: Vec<(NodeId, f64)> = b.leaf_masses(tree).into_iter().filter(|&(_, m)| m > 0.0).collect();
    let sa: f64 = sources.iter().map(|s| s.1).sum();
    let sb: f64 = targets.iter().map(|s| s.1).sum();
    if (sa - sb).abs() > CONSTRAINT_TOL {
        return Err(LgtError::Contract(format!("marginal mismatch: {sa} vs {sb}")));
    }

    let mut nodes = BTreeSet::new();
    let mut own: HashMap<NodeId, (f64, f64)> = HashMap::new();
    for &(u, m) in &sources {
        own.entry(u).or_default().0 += m;
    }
    for &(u, m) in &targets {
        own.entry(u).or_default().1 += m;
    }
    for &u in own.keys() {
        let mut v = u;
        while nodes.insert(v) {
            match tree.parent(v) {
                Some(p) => v = p,
                None => break,
            }
        }
    }

    type Pool = (Vec<(NodeId, f64)>, Vec<(NodeId, f64)>);
    let mut exported: HashMap<NodeId, Pool> = HashMap::new();
    let mut moves = Vec::new();
    let mut cost = 0.0;
    // Children carry larger identifiers than parents, so descending order is a post-order.
    for &u in nodes.iter().rev() {
        let (mut surplus, mut deficit): Pool = (Vec::new(), Vec::new());
        if let Some(&(s, d)) = own.get(&u) {
            if s > 0.0 {
                surplus.push((u, s));
            }
            if d > 0.0 {
                deficit.push((u, d));
            }
        }
        for &c in tree.children(u) {
            if let Some((s, d)) = exported.remove(&c) {
                surplus.extend(s);
                deficit.extend(d);
            }
        }
        let base = tree.layer_of(u);
        let (mut i, mut j) = (0, 0);
        while i < surplus.len() && j < deficit.len() {
            let m = surplus[i].1.min(deficit[j].1);
            if m > 0.0 {
                let distance = tree.layer_of(surplus[i].0) + tree.layer_of(deficit[j].0) - 2 * base;
                moves.push(Move {
                    from: surplus[i].0,
                    to: deficit[j].0,
                    mass: m,
                    distance,
                });
                cost += m * distance as f64;
            }
            surplus[i].1 -= m;
            deficit[j].1 -= m;
            if surplus[i].1 <= 0.0 {
                i += 1;
            }
            if deficit[j].1 <= 0.0 {
                j += 1;
            }
        }
        surplus.drain(..i);
        deficit.drain(..j);
        exported.insert(u, (surplus, deficit));
    }
    Ok(TransportPlan { moves, cost })
}

/// Draws the agent's next position from the plan, conditioned on `current`.
pub fn sample_transition<R: Rng + ?Sized>(plan: &TransportPlan, current: NodeId, rng: &mut R) -> Result<NodeId> {
    let out: Vec<&Move> = plan.outgoing(current).collect();
    pick_weighted(out.iter().map(|m| (m.to, m.mass)), rng)
        .ok_or_else(|| LgtError::Contract(format!("{current} carries no mass in the plan")))
}

pub(crate) fn pick_weighted<R: Rng + ?Sized>(
    items: impl Iterator<Item = (NodeId, f64)> + Clone,
    rng: &mut R,
) -> Option<NodeId> {
    let total: f64 = items.clone().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return None;
    }
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (v, w) in items {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(v);
        if r < acc {
            return Some(v);
        }
    }
    last
}
