//! Runs a policy against an instance or an adaptive adversary and accounts
//! its cost against `OPT(t) = t`.
//!
//! Fractional runs charge the OT distance between consecutive
//! configurations. Randomized runs walk sampled agents along the optimal
//! couplings of the same configurations, so their mean cost estimates the
//! fractional cost.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversaries::{AdaptiveAdversary, Instance};
use crate::baselines::{make_policy, Policy, PolicyKind};
use crate::config::{ot_cost, ot_coupling, sample_transition, Configuration, TransportPlan};
use crate::entropic::{potential_of, PotentialBreakdown};
use crate::error::{LgtError, Result};
use crate::rng::{substream, Stream};
use crate::tree::{DeactivationRecord, LayeredTree, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fractional,
    Randomized,
}

/// Where the width used by the potential comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthSource {
    /// The instance header, or the adversary's width parameter.
    Instance,
    /// The largest layer seen so far.
    RunningMax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    pub potential_monitor: bool,
    pub width_source: WidthSource,
    pub run_id: Option<String>,
}

impl RunConfig {
    /// Fractional mode, one trial, seed 0; the monitor is on only for the
    /// entropic policy.
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            policy,
            mode: Mode::Fractional,
            trials: 1,
            seed: 0,
            potential_monitor: policy == PolicyKind::Entropic,
            width_source: WidthSource::Instance,
            run_id: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub layer_size: usize,
    pub deactivations: Vec<DeactivationRecord>,
    /// Cumulative `L(t)`.
    pub deactivated_edges: usize,
    pub cost_delta: f64,
    pub cumulative_cost: f64,
    pub opt: usize,
    pub ratio: f64,
    pub potential: Option<PotentialBreakdown>,
}

impl StepRecord {
    pub fn potential_slack(&self) -> Option<f64> {
        self.potential.map(|p| p.total - self.cumulative_cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub run_id: String,
    pub policy: PolicyKind,
    pub instance: String,
    pub mode: Mode,
    /// Width fed to the potential, and where it came from.
    pub width: usize,
    pub width_source: WidthSource,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    pub fn total_cost(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative_cost)
    }

    pub fn final_ratio(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.ratio)
    }

    pub fn max_ratio(&self) -> f64 {
        self.steps.iter().map(|s| s.ratio).fold(0.0, f64::max)
    }

    /// Smallest `potential_total - cumulative_cost`; `None` without monitoring.
    pub fn worst_slack(&self) -> Option<f64> {
        self.steps
            .iter()
            .map(StepRecord::potential_slack)
            .try_fold(f64::INFINITY, |acc, s| s.map(|s| acc.min(s)))
            .filter(|_| !self.steps.is_empty())
    }
}

pub enum InstanceSource<'a> {
    Offline(&'a Instance),
    Adaptive(&'a mut AdaptiveAdversary),
}

impl InstanceSource<'_> {
    fn name(&self) -> String {
        match self {
            InstanceSource::Offline(i) => i.name.clone(),
            InstanceSource::Adaptive(a) => a.name(),
        }
    }

    fn declared_width(&self) -> usize {
        match self {
            InstanceSource::Offline(i) => i.width,
            InstanceSource::Adaptive(a) => a.width(),
        }
    }
}

/// Accumulates step records; shared by both modes.
struct Ledger {
    steps: Vec<StepRecord>,
    cumulative: f64,
    running_max: usize,
}

impl Ledger {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            cumulative: 0.0,
            running_max: 0,
        }
    }

    fn width(&self, source: WidthSource, declared: usize) -> usize {
        match source {
            WidthSource::Instance => declared,
            WidthSource::RunningMax => self.running_max,
        }
    }
}

/// Runs `policy` in fractional mode, one step per revealed layer.
pub fn run_fractional(policy: &mut dyn Policy, mut source: InstanceSource<'_>, config: &RunConfig) -> Result<Trace> {
    let declared = source.declared_width();
    let name = source.name();
    let mut tree = LayeredTree::new();
    let mut prev = Configuration::root_only();
    let mut ledger = Ledger::new();
    let mut step = 0;
    loop {
        let update = match &mut source {
            InstanceSource::Offline(inst) => match inst.layers.get(step) {
                Some(u) => u.clone(),
                None => break,
            },
            InstanceSource::Adaptive(adv) => {
                if adv.is_done() {
                    break;
                }
                adv.next_update(&tree, &prev).map_err(|e| e.at_step(step + 1))?
            }
        };
        step += 1;
        let outcome = advance(policy, &mut tree, &update.entries, step)?;
        let cost = ot_cost(&prev, &outcome.0);
        record(&mut ledger, &tree, &outcome, cost, config, declared, step)?;
        prev = outcome.0;
    }
    Ok(finish(ledger, config, name, Mode::Fractional, declared))
}

fn advance(
    policy: &mut dyn Policy,
    tree: &mut LayeredTree,
    entries: &[(NodeId, NodeId)],
    step: usize,
) -> Result<(Configuration, Vec<DeactivationRecord>)> {
    let update = crate::tree::LayerUpdate::new(entries.to_vec());
    let recs = tree.apply_layer(&update).map_err(|e| e.at_step(step))?;
    let cfg = policy.advance(tree).map_err(|e| e.at_step(step))?;
    Ok((cfg, recs))
}

fn record(
    ledger: &mut Ledger,
    tree: &LayeredTree,
    (cfg, deactivations): &(Configuration, Vec<DeactivationRecord>),
    cost: f64,
    config: &RunConfig,
    declared: usize,
    step: usize,
) -> Result<()> {
    let layer_size = tree.current_leaves().len();
    ledger.running_max = ledger.running_max.max(layer_size);
    ledger.cumulative += cost;
    let potential = if config.potential_monitor {
        let w = ledger.width(config.width_source, declared);
        Some(potential_of(cfg, tree, w).map_err(|e| e.at_step(step))?)
    } else {
        None
    };
    ledger.steps.push(StepRecord {
        t: step,
        layer_size,
        deactivations: deactivations.clone(),
        deactivated_edges: tree.deactivated_edges(),
        cost_delta: cost,
        cumulative_cost: ledger.cumulative,
        opt: step,
        ratio: ledger.cumulative / step as f64,
        potential,
    });
    Ok(())
}

fn finish(ledger: Ledger, config: &RunConfig, instance: String, mode: Mode, declared: usize) -> Trace {
    let width = ledger.width(config.width_source, declared);
    Trace {
        run_id: config
            .run_id
            .clone()
            .unwrap_or_else(|| format!("{}:{}", config.policy, instance)),
        policy: config.policy,
        instance,
        mode,
        width,
        width_source: config.width_source,
        steps: ledger.steps,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomizedStats {
    pub mean_cost: f64,
    pub stderr: f64,
    pub per_trial: Vec<f64>,
    /// The fractional cost of the same configurations.
    pub fractional_cost: f64,
    /// Per-step costs averaged over trials.
    pub trace: Trace,
}

/// Samples `config.trials` agents. Each trial `k` draws from its own stream
/// derived from `config.seed`.
pub fn run_randomized(instance: &Instance, config: &RunConfig) -> Result<RandomizedStats> {
    if config.trials == 0 {
        return Err(LgtError::Contract("randomized mode needs at least one trial".into()));
    }
    let mut policy = make_policy(config.policy);
    let mut tree = LayeredTree::new();
    let mut prev = Configuration::root_only();
    let mut plans: Vec<TransportPlan> = Vec::with_capacity(instance.layers.len());
    let mut steps = Vec::with_capacity(instance.layers.len());
    for (i, update) in instance.layers.iter().enumerate() {
        let step = i + 1;
        let next = advance(policy.as_mut(), &mut tree, &update.entries, step)?;
        plans.push(ot_coupling(&prev, &next.0, &tree).map_err(|e| e.at_step(step))?);
        steps.push(next);
        prev = steps.last().expect("just pushed").0.clone();
    }

    let mut step_sums = vec![0.0; plans.len()];
    let mut per_trial = Vec::with_capacity(config.trials);
    for k in 0..config.trials {
        let mut rng = substream(config.seed, Stream::Trial(k as u64));
        let mut pos = NodeId::ROOT;
        let mut total = 0.0;
        for (i, plan) in plans.iter().enumerate() {
            let next = sample_transition(plan, pos, &mut rng).map_err(|e| e.at_step(i + 1))?;
            let d = plan
                .outgoing(pos)
                .find(|m| m.to == next)
                .map(|m| m.distance)
                .expect("sampled move exists") as f64;
            step_sums[i] += d;
            total += d;
            pos = next;
        }
        per_trial.push(total);
    }

    let n = config.trials as f64;
    let mean_cost = per_trial.iter().sum::<f64>() / n;
    let var = if config.trials > 1 {
        per_trial.iter().map(|c| (c - mean_cost).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };

    let mut ledger = Ledger::new();
    tree = LayeredTree::new();
    for (i, (update, outcome)) in instance.layers.iter().zip(&steps).enumerate() {
        tree.apply_layer(update)?;
        record(&mut ledger, &tree, outcome, step_sums[i] / n, config, instance.width, i + 1)?;
    }
    Ok(RandomizedStats {
        mean_cost,
        stderr: (var / n).sqrt(),
        per_trial,
        fractional_cost: plans.iter().map(|p| p.cost).sum(),
        trace: finish(ledger, config, instance.name.clone(), Mode::Randomized, instance.width),
    })
}

/// Dispatches on `config.mode`; adaptive sources only run fractionally.
pub fn run(source: InstanceSource<'_>, config: &RunConfig) -> Result<Trace> {
    match (config.mode, source) {
        (Mode::Fractional, source) => run_fractional(make_policy(config.policy).as_mut(), source, config),
        (Mode::Randomized, InstanceSource::Offline(inst)) => run_randomized(inst, config).map(|s| s.trace),
        (Mode::Randomized, InstanceSource::Adaptive(_)) => Err(LgtError::Contract(
            "adaptive adversaries run in fractional mode only".into(),
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 12] = [
    "run_id",
    "policy",
    "instance",
    "t",
    "layer_size",
    "deactivated_edges",
    "cost_delta",
    "cumulative_cost",
    "opt",
    "ratio",
    "potential_total",
    "potential_slack",
];

pub fn report(traces: &[Trace], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_report(traces, format, file)
}

pub fn write_report<W: Write>(traces: &[Trace], format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for tr in traces {
                for s in &tr.steps {
                    let opt_num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                    w.write_record([
                        tr.run_id.clone(),
                        tr.policy.to_string(),
                        tr.instance.clone(),
                        s.t.to_string(),
                        s.layer_size.to_string(),
                        s.deactivated_edges.to_string(),
                        s.cost_delta.to_string(),
                        s.cumulative_cost.to_string(),
                        s.opt.to_string(),
                        s.ratio.to_string(),
                        opt_num(s.potential.map(|p| p.total)),
                        opt_num(s.potential_slack()),
                    ])?;
                }
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, traces).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn load_json_report(path: impl AsRef<Path>) -> Result<Vec<Trace>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| LgtError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
