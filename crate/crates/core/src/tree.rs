//! The online layered tree.
//!
//! Nodes are revealed one layer at a time. Every non-root node hangs below a
//! node of the previous layer, so the tree is unweighted and all nodes of the
//! last layer sit at the same depth. Identifiers are dense: the root is `0`
//! and each revealed node receives the next free integer, which means a
//! parent always carries a smaller identifier than its children.
//!
//! The *active* tree is the Steiner tree of the current layer and the root.
//! Leaves of the current layer that receive no children are dead-ends; they
//! are pruned together with every ancestor whose only active descendant they
//! were. Pruned nodes remain addressable but are no longer active.

use serde::{Deserialize, Serialize};

use crate::error::{LgtError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The nodes of one new layer, each paired with its parent in the current last layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerUpdate {
    pub entries: Vec<(NodeId, NodeId)>,
}

impl LayerUpdate {
    pub fn new(entries: Vec<(NodeId, NodeId)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One dead-end removal: the leaf and the number of edges it took with it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeactivationRecord {
    pub leaf: NodeId,
    pub d: usize,
}

/// Node heights, indexed by [`NodeId`].
///
/// Integer-valued for ordinary layers; real-valued while interpolating a
/// growth step.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightProfile {
    h: Vec<f64>,
}

impl HeightProfile {
    pub fn from_vec(h: Vec<f64>) -> Self {
        Self { h }
    }

    #[inline]
    pub fn get(&self, u: NodeId) -> f64 {
        self.h[u.index()]
    }

    pub fn set(&mut self, u: NodeId, value: f64) {
        self.h[u.index()] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    /// Checks the profile against the active tree: leaves at 0, no negative
    /// height, and heights never increasing from a parent to its child.
    pub fn validate(&self, tree: &LayeredTree) -> Result<()> {
        if self.h.len() < tree.len() {
            return Err(LgtError::Contract(format!(
                "height profile covers {} nodes, tree has {}",
                self.h.len(),
                tree.len()
            )));
        }
        for u in tree.active_preorder() {
            let hu = self.get(u);
            if !hu.is_finite() || hu < 0.0 {
                return Err(LgtError::Contract(format!("node {u} has height {hu}")));
            }
            if tree.is_leaf(u) && hu != 0.0 {
                return Err(LgtError::Contract(format!("leaf {u} has non-zero height {hu}")));
            }
            if let Some(p) = tree.parent(u) {
                if self.get(p) < hu {
                    return Err(LgtError::Contract(format!(
                        "height increases from {p} ({}) to child {u} ({hu})",
                        self.get(p)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LayeredTree {
    parent: Vec<Option<NodeId>>,
    layer: Vec<usize>,
    children: Vec<Vec<NodeId>>,
    active: Vec<bool>,
    active_children: Vec<u32>,
    current_layer: usize,
    deactivated_edges: usize,
    last_layer: Vec<NodeId>,
}

impl Default for LayeredTree {
    fn default() -> Self {
        Self::new()
    }
}

impl LayeredTree {
    /// A tree holding only the root, at layer 0.
    pub fn new() -> Self {
        Self {
            parent: vec![None],
            layer: vec![0],
            children: vec![Vec::new()],
            active: vec![true],
            active_children: vec![0],
            current_layer: 0,
            deactivated_edges: 0,
            last_layer: vec![NodeId::ROOT],
        }
    }

    /// Replays a sequence of layers from scratch.
    pub fn from_layers<'a>(layers: impl IntoIterator<Item = &'a LayerUpdate>) -> Result<Self> {
        let mut tree = Self::new();
        for (i, update) in layers.into_iter().enumerate() {
            tree.apply_layer(update).map_err(|e| e.at_step(i + 1))?;
        }
        Ok(tree)
    }

    /// Number of nodes ever revealed, pruned ones included.
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, u: NodeId) -> bool {
        u.index() < self.len()
    }

    pub fn current_layer(&self) -> usize {
        self.current_layer
    }

    /// `L(t)`: edges removed from the active tree so far.
    pub fn deactivated_edges(&self) -> usize {
        self.deactivated_edges
    }

    #[inline]
    pub fn parent(&self, u: NodeId) -> Option<NodeId> {
        self.parent[u.index()]
    }

    #[inline]
    pub fn layer_of(&self, u: NodeId) -> usize {
        self.layer[u.index()]
    }

    /// All children ever attached to `u`, in ascending order.
    pub fn children(&self, u: NodeId) -> &[NodeId] {
        &self.children[u.index()]
    }

    pub fn active_children(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children[u.index()]
            .iter()
            .copied()
            .filter(move |v| self.active[v.index()])
    }

    pub fn active_child_count(&self, u: NodeId) -> usize {
        self.active_children[u.index()] as usize
    }

    #[inline]
    pub fn is_active(&self, u: NodeId) -> bool {
        self.active[u.index()]
    }

    /// Active node of the current layer.
    #[inline]
    pub fn is_leaf(&self, u: NodeId) -> bool {
        self.active[u.index()] && self.layer[u.index()] == self.current_layer
    }

    /// `L(t)`, ascending.
    pub fn current_leaves(&self) -> &[NodeId] {
        &self.last_layer
    }

    /// Active nodes, parents before children, siblings in ascending order.
    pub fn active_preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(u) = stack.pop() {
            out.push(u);
            let kids = &self.children[u.index()];
            for &v in kids.iter().rev() {
                if self.active[v.index()] {
                    stack.push(v);
                }
            }
        }
        out
    }

    /// Active nodes of the subtree rooted at `u` (inclusive), in preorder.
    pub fn active_subtree(&self, u: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![u];
        while let Some(v) = stack.pop() {
            out.push(v);
            for &c in self.children[v.index()].iter().rev() {
                if self.active[c.index()] {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// `h_u = t - t_u` for every node.
    pub fn heights(&self) -> HeightProfile {
        let t = self.current_layer as f64;
        HeightProfile::from_vec(self.layer.iter().map(|&l| t - l as f64).collect())
    }

    /// `|L_u|`: number of current-layer descendants of each active node (0 when inactive).
    pub fn subtree_leaf_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.len()];
        for &leaf in &self.last_layer {
            counts[leaf.index()] = 1;
        }
        for u in self.active_preorder().into_iter().rev() {
            if let Some(p) = self.parent(u) {
                counts[p.index()] += counts[u.index()];
            }
        }
        counts
    }

    /// Lowest common ancestor of two nodes (active or not).
    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut a, mut b) = (a, b);
        while self.layer_of(a) > self.layer_of(b) {
            a = self.parent(a).expect("non-root has parent");
        }
        while self.layer_of(b) > self.layer_of(a) {
            b = self.parent(b).expect("non-root has parent");
        }
        while a != b {
            a = self.parent(a).expect("non-root has parent");
            b = self.parent(b).expect("non-root has parent");
        }
        a
    }

    /// Number of edges on the tree path between `a` and `b`.
    pub fn distance(&self, a: NodeId, b: NodeId) -> usize {
        let c = self.lca(a, b);
        self.layer_of(a) + self.layer_of(b) - 2 * self.layer_of(c)
    }

    /// Graph-to-tree reduction of one raw layer: every new node keeps the
    /// first parent it lists.
    pub fn reduce_to_tree(&self, raw: &[(NodeId, Vec<NodeId>)]) -> Result<LayerUpdate> {
        let mut entries = Vec::with_capacity(raw.len());
        for (child, parents) in raw {
            let first = *parents.first().ok_or_else(|| {
                LgtError::MalformedInput(format!("node {child} lists no parent"))
            })?;
            for &p in parents {
                if !self.contains(p) || self.layer_of(p) != self.current_layer {
                    return Err(LgtError::MalformedInput(format!(
                        "node {child} lists parent {p}, which is not in layer {}",
                        self.current_layer
                    )));
                }
            }
            entries.push((*child, first));
        }
        let update = LayerUpdate { entries };
        self.validate_update(&update)?;
        Ok(update)
    }

    fn validate_update(&self, update: &LayerUpdate) -> Result<()> {
        let mut next = self.len();
        for &(child, parent) in &update.entries {
            if child.index() != next {
                return Err(LgtError::MalformedInput(format!(
                    "node {child} is not fresh (expected identifier {next})"
                )));
            }
            if !self.contains(parent) || self.layer_of(parent) != self.current_layer {
                return Err(LgtError::MalformedInput(format!(
                    "parent {parent} of node {child} is not in layer {}",
                    self.current_layer
                )));
            }
            next += 1;
        }
        Ok(())
    }

    /// Reveals layer `t+1`, prunes the dead-ends of layer `t` in ascending
    /// order and advances the clock.
    pub fn apply_layer(&mut self, update: &LayerUpdate) -> Result<Vec<DeactivationRecord>> {
        if update.is_empty() {
            return Err(LgtError::TraversalTerminated {
                layer: self.current_layer + 1,
            });
        }
        self.validate_update(update)?;
        let new_layer = self.current_layer + 1;
        let mut fresh = Vec::with_capacity(update.len());
        for &(child, parent) in &update.entries {
            self.parent.push(Some(parent));
            self.layer.push(new_layer);
            self.children.push(Vec::new());
            self.active.push(true);
            self.active_children.push(0);
            self.children[parent.index()].push(child);
            self.active_children[parent.index()] += 1;
            fresh.push(child);
        }
        let old_leaves = std::mem::replace(&mut self.last_layer, fresh);
        let mut records = Vec::new();
        for leaf in old_leaves {
            if self.active_children[leaf.index()] == 0 {
                let d = self.prune_chain(leaf);
                records.push(DeactivationRecord { leaf, d });
            }
        }
        self.current_layer = new_layer;
        Ok(records)
    }

    /// Removes a single current-layer leaf and its exclusive ancestor chain
    /// without advancing the clock.
    pub fn deactivate_leaf(&mut self, leaf: NodeId) -> Result<DeactivationRecord> {
        if !self.contains(leaf) || !self.is_leaf(leaf) {
            return Err(LgtError::Contract(format!("{leaf} is not an active leaf")));
        }
        if self.last_layer.len() < 2 {
            return Err(LgtError::TraversalTerminated {
                layer: self.current_layer,
            });
        }
        let d = self.prune_chain(leaf);
        self.last_layer.retain(|&l| l != leaf);
        Ok(DeactivationRecord { leaf, d })
    }

    /// `d_ℓ` for an active leaf: how many nodes have it as their only active
    /// descendant (the leaf included).
    pub fn exclusive_chain_len(&self, leaf: NodeId) -> usize {
        let mut d = 1;
        let mut u = leaf;
        while let Some(p) = self.parent(u) {
            if p == NodeId::ROOT || self.active_children[p.index()] > 1 {
                break;
            }
            d += 1;
            u = p;
        }
        d
    }

    fn prune_chain(&mut self, leaf: NodeId) -> usize {
        let mut u = leaf;
        let mut d = 0;
        loop {
            self.active[u.index()] = false;
            d += 1;
            let p = self.parent(u).expect("root is never pruned");
            self.active_children[p.index()] -= 1;
            if p == NodeId::ROOT || self.active_children[p.index()] > 0 {
                break;
            }
            u = p;
        }
        self.deactivated_edges += d;
        d
    }

    /// Structural self-check used by tests and the harness.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 1..self.len() {
            let u = NodeId(i as u32);
            let p = self.parent(u).ok_or_else(|| LgtError::Contract(format!("{u} lacks a parent")))?;
            if self.layer_of(u) != self.layer_of(p) + 1 {
                return Err(LgtError::Contract(format!("{u} is not one layer below {p}")));
            }
            if self.is_active(u) && !self.is_active(p) {
                return Err(LgtError::Contract(format!("active {u} under inactive {p}")));
            }
            if self.is_active(u) && self.layer_of(u) < self.current_layer && self.active_child_count(u) == 0 {
                return Err(LgtError::Contract(format!("active internal {u} has no active child")));
            }
            let counted = self.active_children(u).count();
            if counted != self.active_child_count(u) {
                return Err(LgtError::Contract(format!("stale active-child count at {u}")));
            }
        }
        let pruned = (1..self.len()).filter(|&i| !self.active[i]).count();
        if pruned != self.deactivated_edges {
            return Err(LgtError::Contract(format!(
                "{pruned} inactive nodes but {} deactivated edges",
                self.deactivated_edges
            )));
        }
        let leaves: Vec<NodeId> = (0..self.len())
            .map(|i| NodeId(i as u32))
            .filter(|&u| self.is_leaf(u))
            .collect();
        if leaves != self.last_layer {
            return Err(LgtError::Contract("current-layer bookkeeping out of sync".into()));
        }
        Ok(())
    }
}
