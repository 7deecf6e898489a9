//! The entropy-maximizing traversal policy.
//!
//! On each layer the configuration minimizes `Φ_t(x) = Σ_u x_u ln x_u` over
//! the active polytope. The minimizer has a closed form: walking bottom-up,
//!
//! ```text
//! y_ℓ = exp(-γ_ℓ / h_{p(ℓ)})                 for a current leaf ℓ
//! y_u = (Σ_{v ∈ c(u)} y_v)^(h_u / h_{p(u)})   otherwise
//! x_u / x_{p(u)} = y_u / Σ_{v ∈ c(p(u))} y_v
//! ```
//!
//! which minimizes `Σ h_{p(u)} x_u ln(x_u/x_{p(u)}) + Σ γ_ℓ x_ℓ`. With `γ = 0`
//! every weight satisfies `1 ≤ y_u ≤ |L_u|`.
//!
//! The policy is memoryless: the configuration depends on the current active
//! tree only. Movement is charged as the tree OT distance between
//! consecutive configurations, and the potential
//! `4 L(t)/w + 4 ln w · Φ_t(x(t)) + 6 (1 + ln w)² t` bounds the cumulative cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ot_cost, plain_entropy, Configuration, MASS_FLUSH};
use crate::error::{LgtError, Result};
use crate::tree::{HeightProfile, LayeredTree, NodeId};

/// Linear bias on current leaves; absent entries are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GammaVector {
    bias: BTreeMap<NodeId, f64>,
}

impl GammaVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(leaf: NodeId, value: f64) -> Self {
        let mut bias = BTreeMap::new();
        bias.insert(leaf, value);
        Self { bias }
    }

    pub fn set(&mut self, leaf: NodeId, value: f64) {
        self.bias.insert(leaf, value);
    }

    #[inline]
    pub fn get(&self, u: NodeId) -> f64 {
        self.bias.get(&u).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.bias.iter().map(|(&k, &v)| (k, v))
    }

    pub fn validate(&self, tree: &LayeredTree) -> Result<()> {
        for (&u, g) in &self.bias {
            if !tree.contains(u) || !tree.is_leaf(u) {
                return Err(LgtError::Contract(format!("gamma entry on {u}, which is not an active leaf")));
            }
            if !g.is_finite() {
                return Err(LgtError::Contract(format!("gamma entry on {u} is {g}")));
            }
        }
        Ok(())
    }
}

/// The `y_u` weights of the closed-form minimizer, indexed by node.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitWeights {
    pub y: Vec<f64>,
}

impl ExplicitWeights {
    pub fn get(&self, u: NodeId) -> f64 {
        self.y[u.index()]
    }
}

/// Closed-form minimizer of the height-weighted conditional entropy plus a
/// linear leaf bias.
pub fn explicit_argmin(
    tree: &LayeredTree,
    heights: &HeightProfile,
    gamma: &GammaVector,
) -> Result<(Configuration, ExplicitWeights)> {
    heights.validate(tree)?;
    gamma.validate(tree)?;
    let n = tree.len();
    let order = tree.active_preorder();
    let mut y = vec![0.0; n];
    let mut child_sum = vec![0.0f64; n];
    for &u in order[1..].iter().rev() {
        let p = tree.parent(u).expect("non-root");
        let hp = heights.get(p);
        let yu = if tree.is_leaf(u) {
            let g = gamma.get(u);
            if g == 0.0 {
                1.0
            } else if hp <= 0.0 {
                return Err(LgtError::Contract(format!("leaf {u} has biased gamma but parent height {hp}")));
            } else {
                (-g / hp).exp()
            }
        } else {
            if hp <= 0.0 {
                return Err(LgtError::Contract(format!("internal node {p} has non-positive height {hp}")));
            }
            child_sum[u.index()].powf(heights.get(u) / hp)
        };
        let yu = yu.max(MASS_FLUSH);
        y[u.index()] = yu;
        child_sum[p.index()] += yu;
    }
    let mut cond = vec![0.0; n];
    for &u in &order[1..] {
        let p = tree.parent(u).expect("non-root");
        cond[u.index()] = y[u.index()] / child_sum[p.index()];
    }
    y[0] = child_sum[0];
    Ok((Configuration::from_conditionals(tree, cond), ExplicitWeights { y }))
}

/// The three terms of `P(t)` and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialBreakdown {
    pub deactivation_term: f64,
    pub entropy_term: f64,
    pub time_term: f64,
    pub total: f64,
}

impl PotentialBreakdown {
    /// `4 L/w + 4 ln w · Φ + 6 (1 + ln w)² t`.
    pub fn new(deactivated_edges: usize, entropy: f64, t: usize, width: usize) -> Self {
        let w = width as f64;
        let lw = w.ln();
        let deactivation_term = 4.0 * deactivated_edges as f64 / w;
        let entropy_term = if width == 1 { 0.0 } else { 4.0 * lw * entropy };
        let time_term = 6.0 * (1.0 + lw).powi(2) * t as f64;
        Self {
            deactivation_term,
            entropy_term,
            time_term,
            total: deactivation_term + entropy_term + time_term,
        }
    }
}

/// Competitive ratio ceiling implied by the potential: `4 + 6 (1 + ln w)²`.
pub fn ratio_ceiling(width: usize) -> f64 {
    4.0 + 6.0 * (1.0 + (width as f64).ln()).powi(2)
}

/// Running state of the entropic policy: its configuration on the last layer.
#[derive(Clone, Debug)]
pub struct EntropicPolicy {
    current: Configuration,
}

impl Default for EntropicPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl EntropicPolicy {
    pub fn new() -> Self {
        Self {
            current: Configuration::root_only(),
        }
    }

    pub fn configuration(&self) -> &Configuration {
        &self.current
    }

    /// The memoryless configuration for the tree as it stands.
    pub fn target(tree: &LayeredTree) -> Result<Configuration> {
        explicit_argmin(tree, &tree.heights(), &GammaVector::zero()).map(|(c, _)| c)
    }

    /// Moves to the new layer's minimizer; `tree` must already be advanced
    /// and pruned. Returns the new configuration and the OT cost paid.
    pub fn step(&mut self, tree: &LayeredTree) -> Result<(Configuration, f64)> {
        if tree.current_layer() != self.current.layer() + 1 {
            return Err(LgtError::Contract(format!(
                "policy on layer {} cannot step to tree layer {}",
                self.current.layer(),
                tree.current_layer()
            )));
        }
        let next = Self::target(tree)?;
        let cost = ot_cost(&self.current, &next);
        self.current = next.clone();
        Ok((next, cost))
    }

    pub fn potential(&self, tree: &LayeredTree, declared_width: usize) -> Result<PotentialBreakdown> {
        potential_of(&self.current, tree, declared_width)
    }
}

/// Potential of an arbitrary configuration on the tree's current layer.
pub fn potential_of(cfg: &Configuration, tree: &LayeredTree, declared_width: usize) -> Result<PotentialBreakdown> {
    let observed = tree.current_leaves().len();
    if declared_width < observed.max(1) {
        return Err(LgtError::Contract(format!(
            "declared width {declared_width} below observed layer size {observed}"
        )));
    }
    Ok(PotentialBreakdown::new(
        tree.deactivated_edges(),
        plain_entropy(cfg),
        tree.current_layer(),
        declared_width,
    ))
}
