//! Independent numerical checks of the analysis.
//!
//! The closed-form minimizer is compared against a generic convex solver,
//! the continuous deactivation and growth trajectories are differentiated by
//! central finite differences and compared with the predicted dynamics, and
//! the movement, growth-rate, decay, entropy-identity and potential bounds are
//! evaluated on random trees.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::adversaries::gen_random;
use crate::baselines::PolicyKind;
use crate::config::{conditional_entropy, ot_coupling, plain_entropy, Configuration};
use crate::entropic::{explicit_argmin, GammaVector};
use crate::error::{LgtError, Result};
use crate::harness::{run, InstanceSource, RunConfig, Trace};
use crate::rng::{substream, Stream};
use crate::tree::{HeightProfile, LayerUpdate, LayeredTree, NodeId};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute floor, expressed as the offset in `|fd - pred| / (|pred| + FD_FLOOR)`.
pub const FD_FLOOR: f64 = 1e-5;
pub const BOUND_TOL: f64 = 1e-6;

/// Objective minimized by the closed form: `Σ h_{p(u)} x_u ln cond(u) + Σ γ_ℓ x_ℓ`.
pub fn objective(cfg: &Configuration, heights: &HeightProfile, gamma: &GammaVector, tree: &LayeredTree) -> f64 {
    conditional_entropy(cfg, heights, tree) + gamma.iter().map(|(l, g)| g * cfg.mass(l)).sum::<f64>()
}

/// Exponentiated-gradient descent on the leaf masses.
///
/// On the polytope the objective equals `Σ_u (h_{p(u)} - h_u) x_u ln x_u +
/// Σ γ_ℓ x_ℓ`, which is `h_root`-smooth relative to the leaf entropy, so the
/// step `1/h_root` decreases it monotonically. Stops once the spread of the
/// leaf gradients, an upper bound on the optimality gap, drops below `tol`.
pub fn oracle_argmin(
    tree: &LayeredTree,
    heights: &HeightProfile,
    gamma: &GammaVector,
    max_iters: usize,
    tol: f64,
) -> Result<Configuration> {
    heights.validate(tree)?;
    gamma.validate(tree)?;
    let order = tree.active_preorder();
    let leaves = tree.current_leaves();
    if leaves.is_empty() {
        return Err(LgtError::TraversalTerminated {
            layer: tree.current_layer(),
        });
    }
    let n = tree.len();
    let coef: Vec<f64> = (0..n)
        .map(|i| {
            let u = NodeId(i as u32);
            tree.parent(u).map_or(0.0, |p| heights.get(p) - heights.get(u))
        })
        .collect();
    let eta = 1.0 / heights.get(NodeId::ROOT).max(1e-12);

    let mut leaf_mass = vec![1.0 / leaves.len() as f64; leaves.len()];
    let mut x = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut gap = f64::INFINITY;
    for _ in 0..max_iters {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (&l, &m) in leaves.iter().zip(&leaf_mass) {
            x[l.index()] = m;
        }
        for &u in order[1..].iter().rev() {
            let p = tree.parent(u).expect("non-root");
            x[p.index()] += x[u.index()];
        }
        for &u in &order[1..] {
            let p = tree.parent(u).expect("non-root");
            let c = coef[u.index()];
            let term = if c == 0.0 { 0.0 } else { c * (1.0 + x[u.index()].ln()) };
            acc[u.index()] = acc[p.index()] + term;
        }
        let grad: Vec<f64> = leaves.iter().map(|&l| acc[l.index()] + gamma.get(l)).collect();
        let lo = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gap = hi - lo;
        if gap < tol {
            let masses: Vec<(NodeId, f64)> = leaves.iter().copied().zip(leaf_mass.iter().copied()).collect();
            return Configuration::from_leaf_masses(tree, &masses);
        }
        for (m, g) in leaf_mass.iter_mut().zip(&grad) {
            *m *= (-eta * (g - lo)).exp();
        }
        let total: f64 = leaf_mass.iter().sum();
        leaf_mass.iter_mut().for_each(|m| *m /= total);
    }
    Err(LgtError::NonConvergence {
        iterations: max_iters,
        gap,
    })
}

/// The minimizer with bias `s · e_leaf` and integer heights.
pub fn deactivation_trajectory(tree: &LayeredTree, leaf: NodeId, s: f64) -> Result<Configuration> {
    if !tree.contains(leaf) || !tree.is_leaf(leaf) {
        return Err(LgtError::Contract(format!("{leaf} is not an active leaf")));
    }
    if !s.is_finite() {
        return Err(LgtError::Contract(format!("trajectory parameter {s} is not finite")));
    }
    explicit_argmin(tree, &tree.heights(), &GammaVector::single(leaf, s)).map(|(c, _)| c)
}

/// Heights while interpolating from layer `t` to the revealed layer `t+1`:
/// `h_u + s - 1` for nodes of layers `≤ t`, `0` on the new leaves.
pub fn growth_heights(tree: &LayeredTree, s: f64) -> HeightProfile {
    let mut h = tree.heights();
    for i in 0..tree.len() {
        let u = NodeId(i as u32);
        let v = h.get(u);
        h.set(u, if v >= 1.0 { v - 1.0 + s } else { 0.0 });
    }
    h
}

/// The minimizer along the growth interpolation; `tree` has layer `t+1`
/// revealed and pruned.
pub fn growth_trajectory(tree: &LayeredTree, s: f64) -> Result<Configuration> {
    if !(0.0..=1.0).contains(&s) {
        return Err(LgtError::Contract(format!("growth parameter {s} outside [0, 1]")));
    }
    growth_at(tree, s)
}

fn growth_at(tree: &LayeredTree, s: f64) -> Result<Configuration> {
    if tree.current_layer() == 0 {
        return Err(LgtError::Contract("growth needs a revealed layer".into()));
    }
    explicit_argmin(tree, &growth_heights(tree, s), &GammaVector::zero()).map(|(c, _)| c)
}

#[derive(Clone, Copy, Debug)]
pub enum Trajectory<'a> {
    Deactivation { tree: &'a LayeredTree, leaf: NodeId },
    Growth { tree: &'a LayeredTree },
}

impl<'a> Trajectory<'a> {
    fn tree(&self) -> &'a LayeredTree {
        match *self {
            Trajectory::Deactivation { tree, .. } | Trajectory::Growth { tree } => tree,
        }
    }

    fn at(&self, s: f64) -> Result<Configuration> {
        match *self {
            Trajectory::Deactivation { tree, leaf } => deactivation_trajectory(tree, leaf, s),
            Trajectory::Growth { tree } => growth_at(tree, s),
        }
    }

    fn heights(&self, s: f64) -> HeightProfile {
        match *self {
            Trajectory::Deactivation { tree, .. } => tree.heights(),
            Trajectory::Growth { tree } => growth_heights(tree, s),
        }
    }

    /// Rate vector driving the dynamics at `cfg`.
    fn rate(&self, cfg: &Configuration) -> GammaVector {
        match *self {
            Trajectory::Deactivation { leaf, .. } => GammaVector::single(leaf, 1.0),
            Trajectory::Growth { tree } => {
                let mut g = GammaVector::zero();
                for &l in tree.current_leaves() {
                    g.set(l, cfg.mass(l).ln());
                }
                g
            }
        }
    }

    fn check_domain(&self, s: f64, step: f64) -> Result<()> {
        if !(step > 0.0) {
            return Err(LgtError::Contract(format!("finite-difference step {step} must be positive")));
        }
        match self {
            Trajectory::Deactivation { .. } if s < 0.0 => {
                Err(LgtError::Contract(format!("deactivation parameter {s} is negative")))
            }
            Trajectory::Growth { .. } if s - step < 0.0 || s > 1.0 => Err(LgtError::Contract(format!(
                "growth parameter {s} with step {step} leaves [0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Predicted `∂_s cond(u)` for every active non-root node:
/// `(cond(u) Σ_{L_p} x_ℓ γ_ℓ - Σ_{L_u} x_ℓ γ_ℓ) / (h_p x_p)`.
pub fn predicted_dynamics(
    tree: &LayeredTree,
    cfg: &Configuration,
    heights: &HeightProfile,
    rate: &GammaVector,
) -> Vec<(NodeId, f64)> {
    let order = tree.active_preorder();
    let mut weighted = vec![0.0; tree.len()];
    for (l, g) in rate.iter() {
        weighted[l.index()] = cfg.mass(l) * g;
    }
    for &u in order[1..].iter().rev() {
        let p = tree.parent(u).expect("non-root");
        weighted[p.index()] += weighted[u.index()];
    }
    order[1..]
        .iter()
        .filter_map(|&u| {
            let p = tree.parent(u).expect("non-root");
            let denom = heights.get(p) * cfg.mass(p);
            (denom > 0.0).then(|| (u, (cfg.cond(u) * weighted[p.index()] - weighted[u.index()]) / denom))
        })
        .collect()
}

fn central<F: Fn(&Configuration) -> f64>(lo: &Configuration, hi: &Configuration, step: f64, f: F) -> f64 {
    (f(hi) - f(lo)) / (2.0 * step)
}

fn normalized_error(fd: f64, pred: f64) -> f64 {
    (fd - pred).abs() / (pred.abs() + FD_FLOOR)
}

/// Largest normalized error between finite-difference and predicted
/// conditional derivatives. Fails with a diagnostic when halving the step
/// changes the estimate by more than the tolerance.
pub fn check_dynamics_fd(traj: Trajectory<'_>, s: f64, fd_step: f64) -> Result<f64> {
    traj.check_domain(s, fd_step)?;
    let tree = traj.tree();
    let cfg = traj.at(s)?;
    let pred = predicted_dynamics(tree, &cfg, &traj.heights(s), &traj.rate(&cfg));
    let (lo, hi) = (traj.at(s - fd_step)?, traj.at(s + fd_step)?);
    let half = fd_step / 2.0;
    let (lo2, hi2) = (traj.at(s - half)?, traj.at(s + half)?);
    let mut worst = 0.0f64;
    for (u, p) in pred {
        let fd = central(&lo, &hi, fd_step, |c| c.cond(u));
        let fd2 = central(&lo2, &hi2, half, |c| c.cond(u));
        if normalized_error(fd, fd2) > FD_REL_TOL {
            return Err(LgtError::FiniteDifference(format!(
                "step {fd_step} does not resolve d cond({u})/ds at s={s}: {fd} vs {fd2} at half step"
            )));
        }
        worst = worst.max(normalized_error(fd, p));
    }
    Ok(worst)
}

/// Instantaneous movement `Σ (h_{p(u)} - h_u) |ẋ_u|` (finite differences on
/// absolute masses, edges weighted by their height drop) and the bound
/// `2 Σ h_{p(u)} x_{p(u)} (∂_s cond(u))₋`.
pub fn check_movement_bound(traj: Trajectory<'_>, s: f64, fd_step: f64) -> Result<(f64, f64)> {
    traj.check_domain(s, fd_step)?;
    let tree = traj.tree();
    let h = traj.heights(s);
    let cfg = traj.at(s)?;
    let (lo, hi) = (traj.at(s - fd_step)?, traj.at(s + fd_step)?);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (u, d) in predicted_dynamics(tree, &cfg, &h, &traj.rate(&cfg)) {
        let p = tree.parent(u).expect("non-root");
        lhs += (h.get(p) - h.get(u)) * central(&lo, &hi, fd_step, |c| c.mass(u)).abs();
        rhs += 2.0 * h.get(p) * cfg.mass(p) * (-d).max(0.0);
    }
    Ok((lhs, rhs))
}

/// Growth-phase movement rate against `2 (1 + ln w)²`.
pub fn check_growth_rate_bound(tree: &LayeredTree, s: f64, width: usize, fd_step: f64) -> Result<(f64, f64)> {
    let observed = tree.current_leaves().len();
    if width < observed.max(1) {
        return Err(LgtError::Contract(format!("width {width} below layer size {observed}")));
    }
    let (measured, _) = check_movement_bound(Trajectory::Growth { tree }, s, fd_step)?;
    Ok((measured, growth_rate_bound(width)))
}

pub fn growth_rate_bound(width: usize) -> f64 {
    2.0 * (1.0 + (width as f64).ln()).powi(2)
}

/// Finite-difference `ẋ_ℓ` and the required ceiling `-x_ℓ / (2 d_ℓ)`.
pub fn deactivation_decay(tree: &LayeredTree, leaf: NodeId, s: f64, fd_step: f64) -> Result<(f64, f64)> {
    let traj = Trajectory::Deactivation { tree, leaf };
    if !(s > 0.0) {
        return Err(LgtError::Contract(format!("decay is checked for s > 0, got {s}")));
    }
    traj.check_domain(s, fd_step)?;
    let d = tree.exclusive_chain_len(leaf) as f64;
    let x = traj.at(s)?.mass(leaf);
    let rate = central(&traj.at(s - fd_step)?, &traj.at(s + fd_step)?, fd_step, |c| c.mass(leaf));
    Ok((rate, -x / (2.0 * d)))
}

pub fn check_deactivation_decay(tree: &LayeredTree, leaf: NodeId, s: f64, fd_step: f64) -> Result<bool> {
    let (rate, ceiling) = deactivation_decay(tree, leaf, s, fd_step)?;
    Ok(rate <= ceiling + BOUND_TOL)
}

/// `|Σ x_u ln x_u - Σ h_{p(u)} x_u ln(x_u/x_{p(u)})|`.
pub fn check_entropy_identity(cfg: &Configuration, heights: &HeightProfile, tree: &LayeredTree) -> f64 {
    (plain_entropy(cfg) - conditional_entropy(cfg, heights, tree)).abs()
}

/// Smallest `P(t) - Cost(t)` over the trace.
pub fn check_potential_inequality(trace: &Trace) -> Result<f64> {
    if trace.steps.is_empty() {
        return Err(LgtError::Contract("empty trace".into()));
    }
    trace
        .worst_slack()
        .ok_or_else(|| LgtError::Contract("trace was recorded without potential monitoring".into()))
}

/// Allowed negative slack for a trace: `1e-6 · t_final`.
pub fn potential_tolerance(trace: &Trace) -> f64 {
    BOUND_TOL * trace.steps.len() as f64
}

/// `1 ≤ y_u ≤ |L_u|` (to 1e-12) for every active non-root node.
pub fn check_y_bounds(y: &crate::entropic::ExplicitWeights, leaf_counts: &[usize], tree: &LayeredTree) -> bool {
    tree.active_preorder()[1..].iter().all(|&u| {
        let v = y.get(u);
        v >= 1.0 - 1e-12 && v <= leaf_counts[u.index()] as f64 + 1e-12
    })
}

/// A random pruned tree: every leaf gets 0 to 3 children, layers are capped
/// at `width`, and growth stops at `depth` layers or before `max_nodes`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, width: usize, depth: usize, max_nodes: usize) -> LayeredTree {
    let mut tree = LayeredTree::new();
    let mut next = 1u32;
    for _ in 0..depth {
        let leaves = tree.current_leaves().to_vec();
        let mut parents = Vec::new();
        for &l in &leaves {
            let k = rng.gen_range(0..=3usize);
            parents.extend(std::iter::repeat(l).take(k));
        }
        if parents.is_empty() {
            parents.push(*leaves.choose(rng).expect("tree has a leaf"));
        }
        parents.truncate(width);
        if tree.len() + parents.len() > max_nodes {
            break;
        }
        let update = LayerUpdate::new(
            parents
                .into_iter()
                .map(|p| {
                    next += 1;
                    (NodeId(next - 1), p)
                })
                .collect(),
        );
        tree.apply_layer(&update).expect("generated layer is valid");
    }
    tree
}

/// Random point of the active polytope with conditionals in `(0, 1)`.
pub fn random_configuration<R: Rng + ?Sized>(tree: &LayeredTree, rng: &mut R) -> Configuration {
    let mut cond = vec![0.0; tree.len()];
    for p in tree.active_preorder() {
        let kids: Vec<NodeId> = tree.active_children(p).collect();
        let w: Vec<f64> = kids.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (k, wk) in kids.iter().zip(w) {
            cond[k.index()] = wk / total;
        }
    }
    Configuration::from_conditionals(tree, cond)
}

/// Minimum-cost transport between the leaf distributions of `a` and `b`
/// with path-length costs, by successive shortest paths on the bipartite
/// flow network. Independent of the tree structure beyond distances.
pub fn brute_force_transport(a: &Configuration, b: &Configuration, tree: &LayeredTree) -> Result<f64> {
    let src: Vec<(NodeId, f64)> = a.leaf_masses(tree).into_iter().filter(|s| s.1 > 0.0).collect();
    let dst: Vec<(NodeId, f64)> = b.leaf_masses(tree).into_iter().filter(|s| s.1 > 0.0).collect();
    let (ns, nd) = (src.len(), dst.len());
    // nodes: 0 = source, 1..=ns, ns+1..=ns+nd, sink
    let sink = ns + nd + 1;
    let mut g = FlowGraph::new(sink + 1);
    for (i, &(_, m)) in src.iter().enumerate() {
        g.add(0, 1 + i, m, 0.0);
    }
    for (j, &(_, m)) in dst.iter().enumerate() {
        g.add(1 + ns + j, sink, m, 0.0);
    }
    for (i, &(u, _)) in src.iter().enumerate() {
        for (j, &(v, _)) in dst.iter().enumerate() {
            g.add(1 + i, 1 + ns + j, f64::INFINITY, tree.distance(u, v) as f64);
        }
    }
    let demand: f64 = src.iter().map(|s| s.1).sum();
    let (flow, cost) = g.min_cost_flow(0, sink);
    if (flow - demand).abs() > 1e-9 {
        return Err(LgtError::Contract(format!("transport moved {flow} of {demand}")));
    }
    Ok(cost)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
    }

    fn min_cost_flow(&mut self, s: usize, t: usize) -> (f64, f64) {
        const EPS: f64 = 1e-15;
        let n = self.adj.len();
        let (mut flow, mut cost) = (0.0, 0.0);
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut via = vec![usize::MAX; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u].is_infinite() {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap > EPS && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                            dist[edge.to] = dist[u] + edge.cost;
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t].is_infinite() {
                return (flow, cost);
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
            cost += push * dist[t];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Lemma1,
    Dynamics,
    Movement,
    Growth,
    Potential,
    Identity,
}

impl std::str::FromStr for Suite {
    type Err = LgtError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "lemma1" => Suite::Lemma1,
            "dynamics" => Suite::Dynamics,
            "movement" => Suite::Movement,
            "growth" => Suite::Growth,
            "potential" => Suite::Potential,
            "identity" => Suite::Identity,
            other => return Err(LgtError::MalformedInput(format!("unknown suite '{other}'"))),
        })
    }
}

/// One checker's outcome over its sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub instances: usize,
    /// Worst observed statistic, compared against `threshold`.
    pub worst: f64,
    pub threshold: f64,
    pub pass: bool,
    pub note: Option<String>,
}

impl CheckReport {
    fn at_most(name: &'static str, instances: usize, worst: f64, threshold: f64) -> Self {
        Self {
            name,
            instances,
            worst,
            threshold,
            pass: worst <= threshold,
            note: None,
        }
    }

    fn at_least(name: &'static str, instances: usize, worst: f64, threshold: f64) -> Self {
        Self {
            pass: worst >= threshold,
            ..Self::at_most(name, instances, worst, threshold)
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} instances={:<5} worst={:<12.4e} threshold={:<10.3e} {}",
            self.name,
            self.instances,
            self.worst,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

/// Sweep sizes; the defaults are the ones the checks are specified with.
#[derive(Clone, Copy, Debug)]
pub struct SweepSize {
    pub oracle_trees: usize,
    pub fd_trees: usize,
    pub fd_points: usize,
    pub identity_configs: usize,
    pub transport_trees: usize,
    pub potential_instances: usize,
}

impl Default for SweepSize {
    fn default() -> Self {
        Self {
            oracle_trees: 100,
            fd_trees: 50,
            fd_points: 5,
            identity_configs: 1000,
            transport_trees: 200,
            potential_instances: 20,
        }
    }
}

const ORACLE_ITERS: usize = 200_000;
const ORACLE_GRAD_TOL: f64 = 1e-13;
const DEACTIVATION_POINTS: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.5];
const GROWTH_POINTS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

fn sweep_trees(seed: u64, salt: u64, count: usize, width: usize, depth: usize, max_nodes: usize) -> Vec<LayeredTree> {
    let mut rng = substream(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15), Stream::Instance);
    (0..count)
        .map(|_| {
            let w = rng.gen_range(2..=width);
            let d = rng.gen_range(2..=depth);
            random_tree(&mut rng, w, d, max_nodes)
        })
        .collect()
}

/// Explicit vs oracle minimizer: `(max Φ gap, max conditional gap)`, plus
/// whether the `y` bounds held everywhere.
pub fn closed_form_sweep(seed: u64, trees: usize) -> Result<(f64, f64, bool)> {
    let mut phi_gap = 0.0f64;
    let mut cond_gap = 0.0f64;
    let mut y_ok = true;
    for tree in sweep_trees(seed, 1, trees, 8, 6, 30) {
        let h = tree.heights();
        let zero = GammaVector::zero();
        let (exact, y) = explicit_argmin(&tree, &h, &zero)?;
        y_ok &= check_y_bounds(&y, &tree.subtree_leaf_counts(), &tree);
        let oracle = oracle_argmin(&tree, &h, &zero, ORACLE_ITERS, ORACLE_GRAD_TOL)?;
        phi_gap = phi_gap.max((objective(&exact, &h, &zero, &tree) - objective(&oracle, &h, &zero, &tree)).abs());
        for &u in &tree.active_preorder()[1..] {
            cond_gap = cond_gap.max((exact.cond(u) - oracle.cond(u)).abs());
        }
    }
    Ok((phi_gap, cond_gap, y_ok))
}

/// Trees with at least two leaves for the trajectory checks.
fn trajectory_trees(seed: u64, count: usize) -> Vec<LayeredTree> {
    let mut out = Vec::with_capacity(count);
    let mut salt = 100;
    while out.len() < count {
        out.extend(
            sweep_trees(seed, salt, count, 16, 12, 400)
                .into_iter()
                .filter(|t| t.current_leaves().len() >= 2),
        );
        salt += 1;
    }
    out.truncate(count);
    out
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FdSweep {
    pub deactivation_error: f64,
    pub growth_error: f64,
    /// Smallest `rhs - lhs` of the movement bound across both trajectories.
    pub movement_slack: f64,
    /// Smallest `bound - measured` of the growth rate.
    pub growth_rate_slack: f64,
    /// Smallest `ceiling - ẋ_ℓ` of the decay claim.
    pub decay_slack: f64,
    pub samples: usize,
}

pub fn fd_sweep(seed: u64, trees: usize, points: usize) -> Result<FdSweep> {
    let mut rng = substream(seed, Stream::Policy);
    let mut out = FdSweep {
        movement_slack: f64::INFINITY,
        growth_rate_slack: f64::INFINITY,
        decay_slack: f64::INFINITY,
        ..FdSweep::default()
    };
    for tree in trajectory_trees(seed, trees) {
        let leaf = *tree.current_leaves().choose(&mut rng).expect("two leaves");
        let width = tree.current_leaves().len().max(2);
        for k in 0..points {
            let s = DEACTIVATION_POINTS[k % DEACTIVATION_POINTS.len()];
            let traj = Trajectory::Deactivation { tree: &tree, leaf };
            out.deactivation_error = out.deactivation_error.max(check_dynamics_fd(traj, s, FD_STEP)?);
            let (lhs, rhs) = check_movement_bound(traj, s, FD_STEP)?;
            out.movement_slack = out.movement_slack.min(rhs - lhs);
            let (rate, ceiling) = deactivation_decay(&tree, leaf, s, FD_STEP)?;
            out.decay_slack = out.decay_slack.min(ceiling - rate);

            let g = GROWTH_POINTS[k % GROWTH_POINTS.len()];
            let traj = Trajectory::Growth { tree: &tree };
            out.growth_error = out.growth_error.max(check_dynamics_fd(traj, g, FD_STEP)?);
            let (lhs, rhs) = check_movement_bound(traj, g, FD_STEP)?;
            out.movement_slack = out.movement_slack.min(rhs - lhs);
            let (measured, bound) = check_growth_rate_bound(&tree, g, width, FD_STEP)?;
            out.growth_rate_slack = out.growth_rate_slack.min(bound - measured);
            out.samples += 1;
        }
    }
    Ok(out)
}

/// Largest identity gap over random (non-optimal) configurations.
pub fn identity_sweep(seed: u64, configs: usize) -> f64 {
    let mut rng = substream(seed, Stream::Trial(1));
    let trees = sweep_trees(seed, 2, configs.div_ceil(10).max(1), 16, 12, 300);
    (0..configs)
        .map(|i| {
            let tree = &trees[i % trees.len()];
            let cfg = random_configuration(tree, &mut rng);
            check_entropy_identity(&cfg, &tree.heights(), tree)
        })
        .fold(0.0, f64::max)
}

/// Largest `|coupling cost - brute-force cost|` on trees with at most 8
/// leaves, between a random configuration and a random configuration on the
/// next revealed layer.
pub fn transport_sweep(seed: u64, trees: usize) -> Result<(f64, usize)> {
    let mut rng = substream(seed, Stream::Trial(2));
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut salt = 3;
    while checked < trees {
        for base in sweep_trees(seed, salt, trees, 4, 5, 40) {
            if checked == trees {
                break;
            }
            let a = random_configuration(&base, &mut rng);
            let mut next = base.clone();
            let leaves = base.current_leaves().to_vec();
            let mut entries = Vec::new();
            let mut id = base.len() as u32;
            for &l in &leaves {
                for _ in 0..rng.gen_range(0..=2) {
                    entries.push((NodeId(id), l));
                    id += 1;
                }
            }
            if entries.is_empty() || entries.len() > 8 || leaves.len() > 8 {
                continue;
            }
            next.apply_layer(&LayerUpdate::new(entries))?;
            let b = random_configuration(&next, &mut rng);
            let plan = ot_coupling(&a, &b, &next)?;
            worst = worst.max((plan.cost - brute_force_transport(&a, &b, &next)?).abs());
            checked += 1;
        }
        salt += 1;
    }
    Ok((worst, checked))
}

/// Smallest `(P(t) - Cost(t)) + 1e-6·t` over monitored entropic runs on
/// random instances; nonnegative means every step held.
pub fn potential_sweep(seed: u64, instances: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let w = [2, 4, 8, 16][i % 4];
        let inst = gen_random(w, 150, seed.wrapping_add(i as u64), 0.4, 0.25)?;
        let trace = run(InstanceSource::Offline(&inst), &RunConfig::new(PolicyKind::Entropic))?;
        worst = worst.min(check_potential_inequality(&trace)? + potential_tolerance(&trace));
    }
    Ok(worst)
}

/// Runs the requested checkers; one report per checker.
pub fn run_suite(suite: Suite, seed: u64, size: SweepSize) -> Result<Vec<CheckReport>> {
    let want = |s: Suite| suite == Suite::All || suite == s;
    let mut out = Vec::new();
    if want(Suite::Lemma1) {
        let (phi, cond, y_ok) = closed_form_sweep(seed, size.oracle_trees)?;
        out.push(CheckReport::at_most("closed_form_objective_gap", size.oracle_trees, phi, 1e-8));
        out.push(CheckReport::at_most("closed_form_conditional_gap", size.oracle_trees, cond, 1e-6));
        let mut y = CheckReport::at_most("closed_form_y_bounds", size.oracle_trees, if y_ok { 0.0 } else { 1.0 }, 0.0);
        y.note = Some("1 <= y_u <= |L_u|".into());
        out.push(y);
    }
    let fd_needed = [Suite::Dynamics, Suite::Movement, Suite::Growth].into_iter().any(want);
    if fd_needed {
        let fd = fd_sweep(seed, size.fd_trees, size.fd_points)?;
        if want(Suite::Dynamics) {
            out.push(CheckReport::at_most("dynamics_deactivation", fd.samples, fd.deactivation_error, FD_REL_TOL));
            out.push(CheckReport::at_most("dynamics_growth", fd.samples, fd.growth_error, FD_REL_TOL));
            out.push(CheckReport::at_least("deactivation_decay", fd.samples, fd.decay_slack, -BOUND_TOL));
        }
        if want(Suite::Movement) {
            out.push(CheckReport::at_least("movement_bound", 2 * fd.samples, fd.movement_slack, -BOUND_TOL));
        }
        if want(Suite::Growth) {
            out.push(CheckReport::at_least("growth_rate_bound", fd.samples, fd.growth_rate_slack, -BOUND_TOL));
        }
    }
    if want(Suite::Identity) {
        let gap = identity_sweep(seed, size.identity_configs);
        out.push(CheckReport::at_most("entropy_identity", size.identity_configs, gap, 1e-10));
        let (worst, n) = transport_sweep(seed, size.transport_trees)?;
        out.push(CheckReport::at_most("transport_bruteforce", n, worst, 1e-8));
    }
    if want(Suite::Potential) {
        let slack = potential_sweep(seed, size.potential_instances)?;
        out.push(CheckReport::at_least("potential_inequality", size.potential_instances, slack, 0.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropic::EntropicPolicy;
    use crate::tree::fixtures::*;

    fn star2() -> LayeredTree {
        LayeredTree::from_layers(&[upd(&[(1, 0), (2, 0)])]).unwrap()
    }

    #[test]
    fn oracle_matches_closed_forms() {
        let t = t1();
        let o = oracle_argmin(&t, &t.heights(), &GammaVector::zero(), ORACLE_ITERS, ORACLE_GRAD_TOL).unwrap();
        assert!((o.cond(NodeId(1)) - 0.5857864376269049).abs() < 1e-9);
        let s = star2();
        let g = GammaVector::single(NodeId(1), 2f64.ln());
        let o = oracle_argmin(&s, &s.heights(), &g, ORACLE_ITERS, ORACLE_GRAD_TOL).unwrap();
        assert!((o.mass(NodeId(1)) - 1.0 / 3.0).abs() < 1e-8);
        let c = chain(5);
        let o = oracle_argmin(&c, &c.heights(), &GammaVector::zero(), 10, 1e-12).unwrap();
        assert_eq!(o.mass(NodeId(5)), 1.0);
    }

    #[test]
    fn oracle_reports_non_convergence() {
        let t = t1();
        let g = GammaVector::single(NodeId(3), 0.7);
        match oracle_argmin(&t, &t.heights(), &g, 2, 1e-14) {
            Err(LgtError::NonConvergence { iterations: 2, gap }) => assert!(gap > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deactivation_of_b1_on_t1() {
        let t = t1();
        let b1 = NodeId(5);
        let at0 = deactivation_trajectory(&t, b1, 0.0).unwrap();
        assert_eq!(at0, EntropicPolicy::target(&t).unwrap());
        // y_b1 = 1/2, y_b = (1/2)^(1/2), y_a = √2
        let s = 2f64.ln();
        let c = deactivation_trajectory(&t, b1, s).unwrap();
        let expect = 0.5f64.sqrt() / (2f64.sqrt() + 0.5f64.sqrt());
        assert!((c.cond(NodeId(2)) - expect).abs() < 1e-15);
        assert!((expect - 1.0 / 3.0).abs() < 1e-15);
        let o = oracle_argmin(&t, &t.heights(), &GammaVector::single(b1, s), ORACLE_ITERS, ORACLE_GRAD_TOL).unwrap();
        assert!((o.cond(NodeId(2)) - expect).abs() < 1e-8);
    }

    #[test]
    fn deactivation_limit_is_pruned_argmin() {
        let t = t1();
        let c = deactivation_trajectory(&t, NodeId(5), 1e6).unwrap();
        assert!(c.mass(NodeId(5)) < 1e-6);
        let mut pruned = t.clone();
        pruned.deactivate_leaf(NodeId(5)).unwrap();
        let p = EntropicPolicy::target(&pruned).unwrap();
        for u in [1, 3, 4] {
            assert!((c.mass(NodeId(u)) - p.mass(NodeId(u))).abs() < 1e-6);
        }
    }

    #[test]
    fn growth_endpoints_and_midpoint() {
        let t = t1();
        let xa = |s: f64| {
            let e = 2f64.powf(s / (1.0 + s));
            e / (1.0 + e)
        };
        for s in [0.0, 0.5, 1.0] {
            let c = growth_trajectory(&t, s).unwrap();
            assert!((c.mass(NodeId(1)) - xa(s)).abs() < 1e-15, "s={s}");
        }
        assert_eq!(growth_trajectory(&t, 0.0).unwrap().cond(NodeId(3)), 0.5);
        assert!((xa(0.5) - 0.5575067).abs() < 1e-7);
        assert_eq!(growth_trajectory(&t, 1.0).unwrap(), EntropicPolicy::target(&t).unwrap());
        let h = growth_heights(&t, 0.5);
        let o = oracle_argmin(&t, &h, &GammaVector::zero(), ORACLE_ITERS, ORACLE_GRAD_TOL).unwrap();
        assert!((o.mass(NodeId(1)) - xa(0.5)).abs() < 1e-8);
        assert!(growth_trajectory(&t, 1.5).is_err());
        assert!(growth_trajectory(&t, -0.1).is_err());
    }

    #[test]
    fn t1_dynamics_at_zero() {
        let t = t1();
        let traj = Trajectory::Deactivation { tree: &t, leaf: NodeId(5) };
        let cfg = traj.at(0.0).unwrap();
        let pred = predicted_dynamics(&t, &cfg, &t.heights(), &traj.rate(&cfg));
        let b = pred.iter().find(|p| p.0 == NodeId(2)).unwrap().1;
        assert!((b - (-0.1213203)).abs() < 1e-7, "{b}");
        assert!(check_dynamics_fd(traj, 0.0, FD_STEP).unwrap() <= FD_REL_TOL);
        let (lhs, rhs) = check_movement_bound(traj, 0.0, FD_STEP).unwrap();
        assert!(lhs > 0.0 && rhs > 0.0 && lhs <= rhs + BOUND_TOL, "{lhs} {rhs}");
        let g = Trajectory::Growth { tree: &t };
        assert!(check_dynamics_fd(g, 0.5, FD_STEP).unwrap() <= FD_REL_TOL);
    }

    #[test]
    fn chain_is_static() {
        let c = chain(6);
        let traj = Trajectory::Deactivation { tree: &c, leaf: NodeId(6) };
        assert_eq!(check_dynamics_fd(traj, 0.5, FD_STEP).unwrap(), 0.0);
        assert_eq!(check_movement_bound(traj, 0.5, FD_STEP).unwrap(), (0.0, 0.0));
        let (m, bound) = check_growth_rate_bound(&c, 0.5, 1, FD_STEP).unwrap();
        assert_eq!((m, bound), (0.0, 2.0));
    }

    #[test]
    fn growth_rate_bound_value() {
        assert!((growth_rate_bound(3) - 8.808347).abs() < 1e-6);
    }

    #[test]
    fn fd_step_diagnostics() {
        let t = t1();
        let traj = Trajectory::Deactivation { tree: &t, leaf: NodeId(5) };
        assert!(matches!(check_dynamics_fd(traj, 0.5, 0.5), Err(LgtError::FiniteDifference(_))));
        assert!(check_dynamics_fd(traj, 0.5, 0.0).is_err());
        assert!(check_dynamics_fd(Trajectory::Growth { tree: &t }, 0.0, FD_STEP).is_err());
    }

    #[test]
    fn decay_on_t1_and_deep_chain() {
        let t = t1();
        assert!(check_deactivation_decay(&t, NodeId(5), 0.1, FD_STEP).unwrap());
        let mut last = 1.0;
        for k in 1..40 {
            let x = deactivation_trajectory(&t, NodeId(5), k as f64 * 0.25).unwrap().mass(NodeId(5));
            assert!(x < last);
            last = x;
        }
        // a leaf whose exclusive chain has five edges, next to a short sibling
        let layers = [
            upd(&[(1, 0), (2, 0)]),
            upd(&[(3, 1), (4, 2)]),
            upd(&[(5, 3), (6, 4), (7, 4)]),
            upd(&[(8, 5), (9, 6), (10, 7)]),
            upd(&[(11, 8), (12, 9), (13, 10)]),
        ];
        let deep = LayeredTree::from_layers(&layers).unwrap();
        assert_eq!(deep.exclusive_chain_len(NodeId(11)), 5);
        for s in [0.01, 0.5, 2.0] {
            assert!(check_deactivation_decay(&deep, NodeId(11), s, FD_STEP).unwrap());
        }
        assert!(check_deactivation_decay(&t, NodeId(5), 0.0, FD_STEP).is_err());
    }

    #[test]
    fn identity_and_y_bounds() {
        let t = t1();
        let (c, y) = explicit_argmin(&t, &t.heights(), &GammaVector::zero()).unwrap();
        assert!(check_entropy_identity(&c, &t.heights(), &t) <= 1e-10);
        assert!(check_y_bounds(&y, &t.subtree_leaf_counts(), &t));
        let ch = chain(4);
        let (c, y) = explicit_argmin(&ch, &ch.heights(), &GammaVector::zero()).unwrap();
        assert_eq!(check_entropy_identity(&c, &ch.heights(), &ch), 0.0);
        assert!((1..=4).all(|i| y.get(NodeId(i)) == 1.0));
    }

    #[test]
    fn brute_force_agrees_on_t1() {
        let t = t1();
        let x = EntropicPolicy::target(&t).unwrap();
        let mut pruned = t.clone();
        pruned.deactivate_leaf(NodeId(5)).unwrap();
        let y = Configuration::from_leaf_masses(&pruned, &[(NodeId(3), 0.5), (NodeId(4), 0.5)]).unwrap();
        let bf = brute_force_transport(&x, &y, &t).unwrap();
        assert!((bf - 4.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn potential_check_requires_monitoring() {
        let inst = crate::adversaries::gen_star(2, 4).unwrap();
        let tr = run(InstanceSource::Offline(&inst), &RunConfig::new(PolicyKind::Uniform)).unwrap();
        assert!(check_potential_inequality(&tr).is_err());
        let c = crate::adversaries::gen_star(1, 10).unwrap();
        let tr = run(InstanceSource::Offline(&c), &RunConfig::new(PolicyKind::Entropic)).unwrap();
        assert_eq!(check_potential_inequality(&tr).unwrap(), 5.0);
    }

    #[test]
    fn random_tree_respects_limits() {
        let mut rng = substream(4, Stream::Instance);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 5, 7, 30);
            assert!(t.len() <= 30);
            assert!(t.current_layer() >= 1 && t.current_layer() <= 7);
            t.check_invariants().unwrap();
        }
    }
}
