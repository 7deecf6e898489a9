//! Reference policies: depth-first search, random depth-first search and the
//! uniform-on-leaves distribution, all behind the same [`Policy`] interface as
//! the entropic policy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::entropic::EntropicPolicy;
use crate::error::{LgtError, Result};
use crate::tree::{LayeredTree, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Entropic,
    Dfs,
    RandomDfs,
    Uniform,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Entropic,
        PolicyKind::Dfs,
        PolicyKind::RandomDfs,
        PolicyKind::Uniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Entropic => "entropic",
            PolicyKind::Dfs => "dfs",
            PolicyKind::RandomDfs => "random_dfs",
            PolicyKind::Uniform => "uniform",
        }
    }

    pub fn is_deterministic(self) -> bool {
        matches!(self, PolicyKind::Dfs)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = LgtError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LgtError::MalformedInput(format!("unknown policy '{s}'")))
    }
}

/// A fractional traversal policy: after each layer is revealed (and pruned)
/// it returns its distribution over the new layer.
pub trait Policy {
    fn kind(&self) -> PolicyKind;

    fn advance(&mut self, tree: &LayeredTree) -> Result<Configuration>;
}

impl Policy for EntropicPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Entropic
    }

    fn advance(&mut self, tree: &LayeredTree) -> Result<Configuration> {
        self.step(tree).map(|(c, _)| c)
    }
}

pub fn make_policy(kind: PolicyKind) -> Box<dyn Policy + Send> {
    match kind {
        PolicyKind::Entropic => Box::new(EntropicPolicy::new()),
        PolicyKind::Dfs => Box::new(DfsAgent::new()),
        PolicyKind::RandomDfs => Box::new(RandomDfsPolicy),
        PolicyKind::Uniform => Box::new(UniformPolicy),
    }
}

/// `x_u = x_{p(u)} / |active children of p(u)|`.
pub fn random_dfs_conditionals(tree: &LayeredTree) -> Configuration {
    let mut cond = vec![0.0; tree.len()];
    for u in tree.active_preorder().into_iter().skip(1) {
        let p = tree.parent(u).expect("non-root");
        cond[u.index()] = 1.0 / tree.active_child_count(p) as f64;
    }
    Configuration::from_conditionals(tree, cond)
}

/// Equal mass on every active leaf.
pub fn uniform_configuration(tree: &LayeredTree) -> Result<Configuration> {
    let leaves = tree.current_leaves();
    if leaves.is_empty() {
        return Err(LgtError::TraversalTerminated {
            layer: tree.current_layer(),
        });
    }
    let m = 1.0 / leaves.len() as f64;
    let masses: Vec<_> = leaves.iter().map(|&l| (l, m)).collect();
    Configuration::from_leaf_masses(tree, &masses)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RandomDfsPolicy;

impl Policy for RandomDfsPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RandomDfs
    }

    fn advance(&mut self, tree: &LayeredTree) -> Result<Configuration> {
        Ok(random_dfs_conditionals(tree))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Uniform
    }

    fn advance(&mut self, tree: &LayeredTree) -> Result<Configuration> {
        uniform_configuration(tree)
    }
}

/// Lowest ancestor of `from` (itself included) that is still active.
fn lowest_active_ancestor(tree: &LayeredTree, from: NodeId) -> NodeId {
    let mut a = from;
    while !tree.is_active(a) {
        a = tree.parent(a).expect("root stays active");
    }
    a
}

/// Deterministic depth-first search.
///
/// After each revelation the agent walks to the nearest node of the new
/// layer, breaking ties by smallest identifier. From a live leaf that is one
/// of its children; from a dead-end it backtracks to the lowest ancestor with
/// a surviving branch and descends from there. No edge is walked more than
/// twice.
#[derive(Clone, Debug)]
pub struct DfsAgent {
    position: NodeId,
}

impl Default for DfsAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl DfsAgent {
    pub fn new() -> Self {
        Self {
            position: NodeId::ROOT,
        }
    }

    pub fn position(&self) -> NodeId {
        self.position
    }

    /// Moves to layer `t+1` and returns the new position and edges walked.
    pub fn step(&mut self, tree: &LayeredTree) -> Result<(NodeId, usize)> {
        if tree.layer_of(self.position) + 1 != tree.current_layer() {
            return Err(LgtError::Contract(format!(
                "agent on layer {} cannot step to tree layer {}",
                tree.layer_of(self.position),
                tree.current_layer()
            )));
        }
        if tree.current_leaves().is_empty() {
            return Err(LgtError::TraversalTerminated {
                layer: tree.current_layer(),
            });
        }
        let anchor = lowest_active_ancestor(tree, self.position);
        let target = tree
            .active_subtree(anchor)
            .into_iter()
            .filter(|&v| tree.is_leaf(v))
            .min()
            .expect("an active node has a leaf below it");
        let walked = tree.distance(self.position, target);
        self.position = target;
        Ok((target, walked))
    }
}

impl Policy for DfsAgent {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Dfs
    }

    fn advance(&mut self, tree: &LayeredTree) -> Result<Configuration> {
        let (pos, _) = self.step(tree)?;
        Configuration::point_mass(tree, pos)
    }
}

/// Sampled random depth-first search.
///
/// A live agent descends to a uniformly random child. At a dead-end it
/// returns to the lowest ancestor that still has active branches and
/// descends from there, choosing uniformly among active children at every
/// fork. Its position is distributed exactly as [`random_dfs_conditionals`].
#[derive(Clone, Debug)]
pub struct RandomDfsWalker {
    position: NodeId,
}

impl Default for RandomDfsWalker {
    fn default() -> Self {
        Self::new()
    }
}

impl RandomDfsWalker {
    pub fn new() -> Self {
        Self {
            position: NodeId::ROOT,
        }
    }

    pub fn position(&self) -> NodeId {
        self.position
    }

    pub fn step<R: Rng + ?Sized>(&mut self, tree: &LayeredTree, rng: &mut R) -> Result<(NodeId, usize)> {
        if tree.current_leaves().is_empty() {
            return Err(LgtError::TraversalTerminated {
                layer: tree.current_layer(),
            });
        }
        let mut v = lowest_active_ancestor(tree, self.position);
        while !tree.is_leaf(v) {
            let kids: Vec<NodeId> = tree.active_children(v).collect();
            v = kids[rng.gen_range(0..kids.len())];
        }
        let walked = tree.distance(self.position, v);
        self.position = v;
        Ok((v, walked))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ot_cost;
    use crate::tree::fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dfs_on_uneven_star() {
        // chain of length 2 (smaller ids) and chain of length 3
        let layers = [upd(&[(1, 0), (2, 0)]), upd(&[(3, 1), (4, 2)]), upd(&[(5, 4)])];
        let mut tree = LayeredTree::new();
        let mut dfs = DfsAgent::new();
        let mut total = 0;
        let mut prev = Configuration::root_only();
        for l in &layers {
            tree.apply_layer(l).unwrap();
            let (pos, walked) = dfs.step(&tree).unwrap();
            let cfg = Configuration::point_mass(&tree, pos).unwrap();
            assert_eq!(ot_cost(&prev, &cfg), walked as f64);
            prev = cfg;
            total += walked;
        }
        assert_eq!(total, 7);
    }

    #[test]
    fn dfs_chain_costs_depth() {
        let mut tree = LayeredTree::new();
        let mut dfs = DfsAgent::new();
        let total: usize = (1..=10u32)
            .map(|i| {
                tree.apply_layer(&upd(&[(i, i - 1)])).unwrap();
                dfs.step(&tree).unwrap().1
            })
            .sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn random_dfs_products_of_fanouts() {
        let t = t1();
        let c = random_dfs_conditionals(&t);
        assert_eq!(c.mass(NodeId(3)), 0.25);
        assert_eq!(c.mass(NodeId(4)), 0.25);
        assert_eq!(c.mass(NodeId(5)), 0.5);
        let three = LayeredTree::from_layers(&[upd(&[(1, 0), (2, 0), (3, 0)])]).unwrap();
        let c = random_dfs_conditionals(&three);
        assert!((1..=3).all(|i| c.cond(NodeId(i)) == 1.0 / 3.0));
        let ch = chain(4);
        let c = random_dfs_conditionals(&ch);
        assert!((1..=4).all(|i| c.cond(NodeId(i)) == 1.0));
    }

    #[test]
    fn uniform_masses() {
        let t = t1();
        let c = uniform_configuration(&t).unwrap();
        assert!((c.mass(NodeId(1)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.mass(NodeId(5)) - 1.0 / 3.0).abs() < 1e-15);
        let c = uniform_configuration(&chain(3)).unwrap();
        assert_eq!(c.mass(NodeId(3)), 1.0);
    }

    #[test]
    fn walker_matches_fractional_marginals() {
        // Both leaves under b die at layer 3; mass must flow back through the root.
        let layers = [
            upd(&[(1, 0), (2, 0)]),
            upd(&[(3, 1), (4, 1), (5, 2), (6, 2)]),
            upd(&[(7, 3), (8, 4), (9, 4)]),
        ];
        let tree = LayeredTree::from_layers(&layers).unwrap();
        let expect = random_dfs_conditionals(&tree);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            let mut w = RandomDfsWalker::new();
            let mut t = LayeredTree::new();
            for l in &layers {
                t.apply_layer(l).unwrap();
                w.step(&t, &mut rng).unwrap();
            }
            *counts.entry(w.position()).or_insert(0usize) += 1;
        }
        for leaf in [7u32, 8, 9] {
            let p = expect.mass(NodeId(leaf));
            let got = counts.get(&NodeId(leaf)).copied().unwrap_or(0) as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((got - p).abs() < 4.0 * sigma, "leaf {leaf}: {got} vs {p}");
        }
    }

    #[test]
    fn policy_kind_parses() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("bfs".parse::<PolicyKind>().is_err());
    }
}
