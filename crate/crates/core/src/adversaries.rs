//! Instance generators, adaptive adversaries and the instance file format.
//!
//! Offline families:
//!
//! * `star(w, t)`: `w` disjoint chains from the root, chain `i` of length
//!   `t - w + i`, so exactly one chain reaches depth `t`.
//! * `comb(w, t)`: a spine of length `t`; every spine node at depth
//!   `j ≤ t - w - 1` also starts a tooth, a chain of `w` nodes that dead-ends.
//!   At most `w` teeth are alive at once, so the width is `w + 1`.
//! * `alternating(t)`: two branches under the root; each alternates between
//!   one node and two, out of phase, so every layer past the first has three
//!   nodes.
//! * `random(w, t, seed, split, kill)`: a seeded branching process capped at
//!   width `w`.
//!
//! Within a layer, nodes are numbered in the order listed above (teeth before
//! the spine, left branch before right), which fixes every smallest-identifier
//! tie-break.
//!
//! File format (UTF-8 JSON): `{"name", "width", "seed", "layers"}` where
//! `layers[k]` lists the `[child, parent]` pairs of layer `k + 1`. The root is
//! implicit with identifier 0; identifiers are positive and strictly
//! increasing in file order.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::config::Configuration;
use crate::error::{LgtError, Result};
use crate::rng::{substream, Stream};
use crate::tree::{LayerUpdate, LayeredTree, NodeId};

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub width: usize,
    pub seed: Option<u64>,
    pub layers: Vec<LayerUpdate>,
}

impl Instance {
    /// Depth of the target layer.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn max_layer_size(&self) -> usize {
        self.layers.iter().map(|l| l.len()).max().unwrap_or(0)
    }

    /// Replays the instance and checks the width bound.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(LgtError::Contract("width must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(LgtError::Contract("instance has no layers".into()));
        }
        if self.max_layer_size() > self.width {
            return Err(LgtError::Contract(format!(
                "layer of size {} exceeds declared width {}",
                self.max_layer_size(),
                self.width
            )));
        }
        LayeredTree::from_layers(&self.layers)?.check_invariants()
    }

    /// The fully revealed tree.
    pub fn replay(&self) -> Result<LayeredTree> {
        LayeredTree::from_layers(&self.layers)
    }

    fn finish(name: String, seed: Option<u64>, layers: Vec<LayerUpdate>) -> Self {
        let width = layers.iter().map(|l| l.len()).max().unwrap_or(1);
        Self {
            name,
            width,
            seed,
            layers,
        }
    }
}

/// Hands out consecutive identifiers while building layers.
struct LayerBuilder {
    next: u32,
    layers: Vec<LayerUpdate>,
}

impl LayerBuilder {
    fn new() -> Self {
        Self {
            next: 1,
            layers: Vec::new(),
        }
    }

    /// Appends a layer with one child per listed parent; returns the children.
    fn push(&mut self, parents: &[NodeId]) -> Vec<NodeId> {
        let mut entries = Vec::with_capacity(parents.len());
        for &p in parents {
            entries.push((NodeId(self.next), p));
            self.next += 1;
        }
        let kids = entries.iter().map(|e| e.0).collect();
        self.layers.push(LayerUpdate::new(entries));
        kids
    }
}

pub fn gen_star(w: usize, t: usize) -> Result<Instance> {
    if w == 0 || t < w {
        return Err(LgtError::Contract(format!("star needs 1 ≤ w ≤ t, got w={w}, t={t}")));
    }
    let lengths: Vec<usize> = (1..=w).map(|i| t - w + i).collect();
    Ok(chains(format!("star(w={w},t={t})"), &lengths))
}

/// Disjoint chains from the root with the given lengths, numbered in chain
/// order within each layer.
fn chains(name: String, lengths: &[usize]) -> Instance {
    let depth = lengths.iter().copied().max().unwrap_or(0);
    let mut ends = vec![NodeId::ROOT; lengths.len()];
    let mut b = LayerBuilder::new();
    for k in 1..=depth {
        let alive: Vec<usize> = (0..lengths.len()).filter(|&c| lengths[c] >= k).collect();
        let parents: Vec<NodeId> = alive.iter().map(|&c| ends[c]).collect();
        let kids = b.push(&parents);
        for (c, kid) in alive.into_iter().zip(kids) {
            ends[c] = kid;
        }
    }
    Instance::finish(name, None, b.layers)
}

pub fn gen_comb(w: usize, t: usize) -> Result<Instance> {
    if w < 2 || t <= 2 * w {
        return Err(LgtError::Contract(format!("comb needs w ≥ 2 and t > 2w, got w={w}, t={t}")));
    }
    let mut b = LayerBuilder::new();
    let mut spine = NodeId::ROOT;
    // (attachment depth, current end) of every live tooth, oldest first
    let mut teeth: Vec<(usize, NodeId)> = Vec::new();
    for k in 1..=t {
        teeth.retain(|&(j, _)| j + w >= k);
        let mut parents: Vec<NodeId> = teeth.iter().map(|&(_, end)| end).collect();
        let attach = k - 1 + w < t;
        if attach {
            parents.push(spine);
        }
        parents.push(spine);
        let kids = b.push(&parents);
        for (tooth, &kid) in teeth.iter_mut().zip(&kids) {
            tooth.1 = kid;
        }
        if attach {
            teeth.push((k - 1, kids[kids.len() - 2]));
        }
        spine = *kids.last().expect("spine continues");
    }
    Ok(Instance::finish(format!("comb(w={w},t={t},tooth={w},spacing=1)"), None, b.layers))
}

pub fn gen_alternating(t: usize) -> Result<Instance> {
    if t < 2 {
        return Err(LgtError::Contract(format!("alternating needs t ≥ 2, got {t}")));
    }
    let mut b = LayerBuilder::new();
    let first = b.push(&[NodeId::ROOT, NodeId::ROOT]);
    let mut branches = vec![vec![first[0]], vec![first[1]]];
    for k in 2..=t {
        let mut parents = Vec::new();
        let mut sizes = Vec::new();
        for (side, nodes) in branches.iter().enumerate() {
            let wide = (k + side) % 2 == 0;
            if wide {
                // the single node splits
                parents.extend([nodes[0], nodes[0]]);
                sizes.push(2);
            } else {
                // the pair contracts: only its first node continues
                parents.push(nodes[0]);
                sizes.push(1);
            }
        }
        let kids = b.push(&parents);
        let (left, right) = kids.split_at(sizes[0]);
        branches = vec![left.to_vec(), right.to_vec()];
    }
    Ok(Instance::finish(format!("alternating(t={t})"), None, b.layers))
}

/// Star whose `i`-th explored chain (per `exploration_order`) has length
/// `t - w + i`.
pub fn adaptive_dfs_lengths(w: usize, t: usize, exploration_order: &[usize]) -> Result<Instance> {
    if w == 0 || t < w {
        return Err(LgtError::Contract(format!("need 1 ≤ w ≤ t, got w={w}, t={t}")));
    }
    let mut seen = vec![false; w];
    if exploration_order.len() != w
        || exploration_order
            .iter()
            .any(|&c| c >= w || std::mem::replace(&mut seen[c], true))
    {
        return Err(LgtError::Contract(format!(
            "exploration order {exploration_order:?} is not a permutation of 0..{w}"
        )));
    }
    let mut lengths = vec![0; w];
    for (i, &c) in exploration_order.iter().enumerate() {
        lengths[c] = t - w + i + 1;
    }
    Ok(chains(format!("dfs_lengths(w={w},t={t})"), &lengths))
}

pub fn gen_random(w: usize, t: usize, seed: u64, split_prob: f64, kill_prob: f64) -> Result<Instance> {
    const RETRIES: usize = 64;
    if w == 0 || t == 0 {
        return Err(LgtError::Contract("random instance needs w ≥ 1 and t ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&split_prob) || !(0.0..=1.0).contains(&kill_prob) {
        return Err(LgtError::Contract("probabilities must lie in [0, 1]".into()));
    }
    let mut rng = substream(seed, Stream::Instance);
    let mut b = LayerBuilder::new();
    let mut current = vec![NodeId::ROOT];
    for k in 1..=t {
        let mut counts = Vec::new();
        for attempt in 0..=RETRIES {
            if attempt == RETRIES {
                return Err(LgtError::GenerationFailed(format!(
                    "every node of layer {} died in {RETRIES} attempts",
                    k - 1
                )));
            }
            counts = current
                .iter()
                .map(|_| {
                    if rng.gen_bool(kill_prob) {
                        0usize
                    } else if rng.gen_bool(split_prob) {
                        2
                    } else {
                        1
                    }
                })
                .collect();
            if counts.iter().any(|&c| c > 0) {
                break;
            }
        }
        let mut excess = counts.iter().sum::<usize>().saturating_sub(w);
        for c in counts.iter_mut().rev() {
            if excess == 0 {
                break;
            }
            if *c > 1 {
                *c -= 1;
                excess -= 1;
            }
        }
        let parents: Vec<NodeId> = current
            .iter()
            .zip(&counts)
            .flat_map(|(&p, &c)| std::iter::repeat(p).take(c))
            .collect();
        current = b.push(&parents);
    }
    Ok(Instance::finish(
        format!("random(w={w},t={t},seed={seed},split={split_prob},kill={kill_prob})"),
        Some(seed),
        b.layers,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    /// Starves the endpoint that carries the most mass.
    MaxMass,
    /// Starves chains in the order a smallest-identifier DFS explores them.
    DfsLengths,
}

/// A star of `w` equal chains that, over its final `w` layers, gives no
/// children to one endpoint per layer.
#[derive(Clone, Debug)]
pub struct AdaptiveAdversary {
    kind: AdversaryKind,
    width: usize,
    horizon: usize,
    layer: usize,
    next_id: u32,
    ends: Vec<Option<NodeId>>,
    transcript: Vec<LayerUpdate>,
}

impl AdaptiveAdversary {
    pub fn new(kind: AdversaryKind, width: usize, horizon: usize) -> Result<Self> {
        if width == 0 || horizon < width {
            return Err(LgtError::Contract(format!(
                "adversary needs 1 ≤ w ≤ t, got w={width}, t={horizon}"
            )));
        }
        Ok(Self {
            kind,
            width,
            horizon,
            layer: 0,
            next_id: 1,
            ends: vec![Some(NodeId::ROOT); width],
            transcript: Vec::new(),
        })
    }

    pub fn kind(&self) -> AdversaryKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_done(&self) -> bool {
        self.layer >= self.horizon
    }

    pub fn name(&self) -> String {
        let k = match self.kind {
            AdversaryKind::MaxMass => "max_mass",
            AdversaryKind::DfsLengths => "dfs_lengths",
        };
        format!("{k}(w={},t={})", self.width, self.horizon)
    }

    /// Produces layer `t+1` after observing the policy's configuration on layer `t`.
    pub fn next_update(&mut self, tree: &LayeredTree, observed: &Configuration) -> Result<LayerUpdate> {
        if self.is_done() {
            return Err(LgtError::Contract(format!("adversary called past its horizon {}", self.horizon)));
        }
        if tree.current_layer() != self.layer {
            return Err(LgtError::Contract(format!(
                "adversary at layer {} fed a tree at layer {}",
                self.layer,
                tree.current_layer()
            )));
        }
        if self.layer + self.width > self.horizon {
            let victim = match self.kind {
                AdversaryKind::MaxMass => {
                    let mut best: Option<(usize, f64)> = None;
                    for (c, end) in self.ends.iter().enumerate() {
                        if let Some(e) = end {
                            let m = observed.mass(*e);
                            if best.map_or(true, |(_, bm)| m > bm) {
                                best = Some((c, m));
                            }
                        }
                    }
                    best.map(|b| b.0)
                }
                AdversaryKind::DfsLengths => self.ends.iter().position(|e| e.is_some()),
            }
            .expect("at least two chains alive before the horizon");
            self.ends[victim] = None;
        }
        let mut entries = Vec::new();
        for end in self.ends.iter_mut().flatten() {
            let kid = NodeId(self.next_id);
            self.next_id += 1;
            entries.push((kid, *end));
            *end = kid;
        }
        self.layer += 1;
        let update = LayerUpdate::new(entries);
        self.transcript.push(update.clone());
        Ok(update)
    }

    /// The layers produced so far, as an offline instance.
    pub fn transcript(&self) -> Instance {
        Instance {
            name: self.name(),
            width: self.width,
            seed: None,
            layers: self.transcript.clone(),
        }
    }
}

/// Writes an instance file (one layer per line).
pub fn save_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(instance))?;
    Ok(())
}

pub fn instance_to_json(instance: &Instance) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str(&format!(
        "  \"name\": {},\n",
        serde_json::to_string(&instance.name).expect("string serializes")
    ));
    s.push_str(&format!("  \"width\": {},\n", instance.width));
    match instance.seed {
        Some(seed) => s.push_str(&format!("  \"seed\": {seed},\n")),
        None => s.push_str("  \"seed\": null,\n"),
    }
    s.push_str("  \"layers\": [\n");
    for (i, layer) in instance.layers.iter().enumerate() {
        let pairs: Vec<String> = layer.entries.iter().map(|(c, p)| format!("[{c},{p}]")).collect();
        s.push_str("    [");
        s.push_str(&pairs.join(","));
        s.push(']');
        if i + 1 < instance.layers.len() {
            s.push(',');
        }
        s.push('\n');
    }
    s.push_str("  ]\n}\n");
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: String,
    width: usize,
    seed: Option<u64>,
    layers: Vec<Vec<(u64, u64)>>,
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    instance_from_json(&fs::read_to_string(path)?)
}

/// Parses and validates an instance; identifiers are relabelled densely in
/// file order (a no-op for files written by [`save_instance`]).
pub fn instance_from_json(text: &str) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| LgtError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let bad = |layer: usize, entry: usize, field: &'static str, message: String| LgtError::InvalidInstance {
        layer,
        entry,
        field,
        message,
    };
    if raw.width == 0 {
        return Err(bad(0, 0, "width", "width must be positive".into()));
    }
    if raw.layers.is_empty() {
        return Err(bad(0, 0, "layers", "instance has no layers".into()));
    }
    let mut dense = std::collections::HashMap::new();
    dense.insert(0u64, NodeId::ROOT);
    let mut prev_layer: std::collections::HashSet<u64> = [0u64].into_iter().collect();
    let mut last_id = 0u64;
    let mut next = 1u32;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (k, layer) in raw.layers.iter().enumerate() {
        let k1 = k + 1;
        if layer.is_empty() {
            return Err(bad(k1, 0, "layers", "layer is empty".into()));
        }
        if layer.len() > raw.width {
            return Err(bad(k1, 0, "width", format!("layer has {} nodes, width is {}", layer.len(), raw.width)));
        }
        let mut entries = Vec::with_capacity(layer.len());
        let mut this_layer = std::collections::HashSet::new();
        for (e, &(child, parent)) in layer.iter().enumerate() {
            if child <= last_id {
                return Err(bad(k1, e, "child", format!("identifier {child} is not increasing")));
            }
            if !prev_layer.contains(&parent) {
                return Err(bad(k1, e, "parent", format!("parent {parent} is not in layer {k}")));
            }
            last_id = child;
            let id = NodeId(next);
            next += 1;
            dense.insert(child, id);
            this_layer.insert(child);
            entries.push((id, dense[&parent]));
        }
        layers.push(LayerUpdate::new(entries));
        prev_layer = this_layer;
    }
    Ok(Instance {
        name: raw.name,
        width: raw.width,
        seed: raw.seed,
        layers,
    })
}
