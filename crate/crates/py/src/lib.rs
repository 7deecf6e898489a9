//! Python bindings for `lgt_core`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lgt_core::adversaries as adv;
use lgt_core::harness::{self, InstanceSource, Mode, ReportFormat, RunConfig, WidthSource};
use lgt_core::{config, entropic, verify, LgtError, NodeId};

fn to_py(e: LgtError) -> PyErr {
    match e {
        LgtError::Io(io) => PyOSError::new_err(io.to_string()),
        e @ (LgtError::NonConvergence { .. } | LgtError::FiniteDifference(_) | LgtError::TraversalTerminated { .. }) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn ids(v: &[NodeId]) -> Vec<u32> {
    v.iter().map(|u| u.0).collect()
}

/// A layered tree revealed one layer at a time.
#[pyclass(name = "LayeredTree", module = "lgt", skip_from_py_object)]
#[derive(Clone)]
struct PyTree {
    inner: lgt_core::LayeredTree,
}

#[pymethods]
impl PyTree {
    #[new]
    fn new() -> Self {
        Self {
            inner: lgt_core::LayeredTree::new(),
        }
    }

    /// Reveals a layer given as `(child, parent)` pairs; returns the pruned
    /// dead-ends as `(leaf, chain_length)`.
    fn apply_layer(&mut self, entries: Vec<(u32, u32)>) -> PyResult<Vec<(u32, usize)>> {
        let update = lgt_core::LayerUpdate::new(entries.into_iter().map(|(c, p)| (NodeId(c), NodeId(p))).collect());
        let recs = self.inner.apply_layer(&update).map_err(to_py)?;
        Ok(recs.into_iter().map(|r| (r.leaf.0, r.d)).collect())
    }

    #[getter]
    fn current_layer(&self) -> usize {
        self.inner.current_layer()
    }

    #[getter]
    fn deactivated_edges(&self) -> usize {
        self.inner.deactivated_edges()
    }

    fn leaves(&self) -> Vec<u32> {
        ids(self.inner.current_leaves())
    }

    fn active_nodes(&self) -> Vec<u32> {
        ids(&self.inner.active_preorder())
    }

    fn parent(&self, u: u32) -> PyResult<Option<u32>> {
        self.check(u)?;
        Ok(self.inner.parent(NodeId(u)).map(|p| p.0))
    }

    fn layer_of(&self, u: u32) -> PyResult<usize> {
        self.check(u)?;
        Ok(self.inner.layer_of(NodeId(u)))
    }

    fn is_active(&self, u: u32) -> PyResult<bool> {
        self.check(u)?;
        Ok(self.inner.is_active(NodeId(u)))
    }

    fn distance(&self, a: u32, b: u32) -> PyResult<usize> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.inner.distance(NodeId(a), NodeId(b)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "LayeredTree(layer={}, nodes={}, leaves={})",
            self.inner.current_layer(),
            self.inner.len(),
            self.inner.current_leaves().len()
        )
    }
}

impl PyTree {
    fn check(&self, u: u32) -> PyResult<()> {
        if self.inner.contains(NodeId(u)) {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("unknown node {u}")))
        }
    }
}

/// A distribution over one layer, kept together with the tree it lives on.
#[pyclass(name = "Configuration", module = "lgt", skip_from_py_object)]
#[derive(Clone)]
struct PyConfiguration {
    inner: config::Configuration,
    tree: lgt_core::LayeredTree,
}

#[pymethods]
impl PyConfiguration {
    #[getter]
    fn layer(&self) -> usize {
        self.inner.layer()
    }

    fn mass(&self, u: u32) -> f64 {
        self.inner.mass(NodeId(u))
    }

    fn cond(&self, u: u32) -> f64 {
        self.inner.cond(NodeId(u))
    }

    fn leaf_masses(&self) -> BTreeMap<u32, f64> {
        self.inner.leaf_masses(&self.tree).into_iter().map(|(u, m)| (u.0, m)).collect()
    }

    /// Height-weighted entropy under the current heights.
    fn entropy(&self) -> PyResult<f64> {
        config::entropy_value(&self.inner, &self.tree.heights(), &self.tree).map_err(to_py)
    }

    fn potential(&self, width: usize) -> PyResult<BTreeMap<&'static str, f64>> {
        let p = entropic::potential_of(&self.inner, &self.tree, width).map_err(to_py)?;
        Ok(BTreeMap::from([
            ("deactivation_term", p.deactivation_term),
            ("entropy_term", p.entropy_term),
            ("time_term", p.time_term),
            ("total", p.total),
        ]))
    }

    fn __repr__(&self) -> String {
        format!("Configuration(layer={}, support={})", self.inner.layer(), self.inner.support().len())
    }
}

/// An offline instance: a named sequence of layer revelations.
#[pyclass(name = "Instance", module = "lgt", skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: adv::Instance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn star(width: usize, depth: usize) -> PyResult<Self> {
        Self::wrap(adv::gen_star(width, depth))
    }

    #[staticmethod]
    fn comb(width: usize, depth: usize) -> PyResult<Self> {
        Self::wrap(adv::gen_comb(width, depth))
    }

    #[staticmethod]
    fn alternating(depth: usize) -> PyResult<Self> {
        Self::wrap(adv::gen_alternating(depth))
    }

    #[staticmethod]
    #[pyo3(signature = (width, depth, seed, split=0.4, kill=0.25))]
    fn random(width: usize, depth: usize, seed: u64, split: f64, kill: f64) -> PyResult<Self> {
        Self::wrap(adv::gen_random(width, depth, seed, split, kill))
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Self::wrap(adv::load_instance(path))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::wrap(adv::instance_from_json(text))
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        adv::save_instance(&self.inner, path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        adv::instance_to_json(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn layers(&self) -> Vec<Vec<(u32, u32)>> {
        self.inner
            .layers
            .iter()
            .map(|l| l.entries.iter().map(|(c, p)| (c.0, p.0)).collect())
            .collect()
    }

    /// The fully revealed, pruned tree.
    fn replay(&self) -> PyResult<PyTree> {
        Ok(PyTree {
            inner: self.inner.replay().map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Instance({:?}, width={}, depth={})", self.inner.name, self.inner.width, self.inner.depth())
    }
}

impl PyInstance {
    fn wrap(r: lgt_core::Result<adv::Instance>) -> PyResult<Self> {
        r.map(|inner| Self { inner }).map_err(to_py)
    }
}

/// Per-step record of one run.
#[pyclass(name = "Trace", module = "lgt", skip_from_py_object)]
#[derive(Clone)]
struct PyTrace {
    inner: harness::Trace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn run_id(&self) -> &str {
        &self.inner.run_id
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.inner.policy.as_str()
    }

    #[getter]
    fn instance(&self) -> &str {
        &self.inner.instance
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    fn total_cost(&self) -> f64 {
        self.inner.total_cost()
    }

    fn final_ratio(&self) -> f64 {
        self.inner.final_ratio()
    }

    fn max_ratio(&self) -> f64 {
        self.inner.max_ratio()
    }

    fn worst_slack(&self) -> Option<f64> {
        self.inner.worst_slack()
    }

    fn steps<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .steps
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("t", s.t)?;
                d.set_item("layer_size", s.layer_size)?;
                d.set_item("deactivated_edges", s.deactivated_edges)?;
                d.set_item("cost_delta", s.cost_delta)?;
                d.set_item("cumulative_cost", s.cumulative_cost)?;
                d.set_item("opt", s.opt)?;
                d.set_item("ratio", s.ratio)?;
                d.set_item("potential", s.potential.map(|p| p.total))?;
                Ok(d)
            })
            .collect()
    }

    /// Report text in `csv` or `json`.
    #[pyo3(signature = (format="csv"))]
    fn report(&self, format: &str) -> PyResult<String> {
        let format = match format {
            "csv" => ReportFormat::Csv,
            "json" => ReportFormat::Json,
            other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
        };
        let mut buf = Vec::new();
        harness::write_report(std::slice::from_ref(&self.inner), format, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace({:?}, steps={}, cost={}, ratio={})",
            self.inner.run_id,
            self.inner.steps.len(),
            self.inner.total_cost(),
            self.inner.final_ratio()
        )
    }
}

fn parse_config(
    policy: &str,
    mode: &str,
    trials: usize,
    seed: u64,
    monitor_potential: Option<bool>,
    width_source: &str,
) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::new(policy.parse().map_err(to_py)?);
    cfg.mode = match mode {
        "fractional" => Mode::Fractional,
        "randomized" => Mode::Randomized,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    cfg.width_source = match width_source {
        "instance" => WidthSource::Instance,
        "running_max" => WidthSource::RunningMax,
        other => return Err(PyValueError::new_err(format!("unknown width source '{other}'"))),
    };
    cfg.trials = trials;
    cfg.seed = seed;
    if let Some(m) = monitor_potential {
        cfg.potential_monitor = m;
    }
    Ok(cfg)
}

/// Runs `policy` on an offline instance. Randomized runs report per-step
/// costs averaged over trials.
#[pyfunction]
#[pyo3(signature = (instance, policy, mode="fractional", trials=1000, seed=0, monitor_potential=None, width_source="instance"))]
fn run(
    py: Python<'_>,
    instance: &PyInstance,
    policy: &str,
    mode: &str,
    trials: usize,
    seed: u64,
    monitor_potential: Option<bool>,
    width_source: &str,
) -> PyResult<PyTrace> {
    let cfg = parse_config(policy, mode, trials, seed, monitor_potential, width_source)?;
    let inst = &instance.inner;
    let trace = py
        .detach(|| match cfg.mode {
            Mode::Fractional => harness::run(InstanceSource::Offline(inst), &cfg),
            Mode::Randomized => harness::run_randomized(inst, &cfg).map(|s| s.trace),
        })
        .map_err(to_py)?;
    Ok(PyTrace { inner: trace })
}

/// Mean cost, its standard error and the matching fractional cost.
#[pyfunction]
#[pyo3(signature = (instance, policy, trials=1000, seed=0))]
fn randomized_stats(py: Python<'_>, instance: &PyInstance, policy: &str, trials: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let cfg = parse_config(policy, "randomized", trials, seed, None, "instance")?;
    let inst = &instance.inner;
    let s = py.detach(|| harness::run_randomized(inst, &cfg)).map_err(to_py)?;
    Ok((s.mean_cost, s.stderr, s.fractional_cost))
}

/// Runs `policy` against an adaptive adversary (`max_mass` or `dfs_lengths`).
#[pyfunction]
#[pyo3(signature = (adversary, width, depth, policy, monitor_potential=None))]
fn run_adversary(
    py: Python<'_>,
    adversary: &str,
    width: usize,
    depth: usize,
    policy: &str,
    monitor_potential: Option<bool>,
) -> PyResult<PyTrace> {
    let kind = match adversary {
        "max_mass" => adv::AdversaryKind::MaxMass,
        "dfs_lengths" => adv::AdversaryKind::DfsLengths,
        other => return Err(PyValueError::new_err(format!("unknown adversary '{other}'"))),
    };
    let cfg = parse_config(policy, "fractional", 1, 0, monitor_potential, "instance")?;
    let trace = py
        .detach(|| {
            let mut a = adv::AdaptiveAdversary::new(kind, width, depth)?;
            harness::run(InstanceSource::Adaptive(&mut a), &cfg)
        })
        .map_err(to_py)?;
    Ok(PyTrace { inner: trace })
}

/// Closed-form entropic minimizer with optional leaf biases; returns the
/// configuration and the `y` weights of active nodes.
#[pyfunction]
#[pyo3(signature = (tree, gamma=None))]
fn explicit_argmin(tree: &PyTree, gamma: Option<BTreeMap<u32, f64>>) -> PyResult<(PyConfiguration, BTreeMap<u32, f64>)> {
    let mut g = entropic::GammaVector::zero();
    for (u, v) in gamma.unwrap_or_default() {
        g.set(NodeId(u), v);
    }
    let t = &tree.inner;
    let (cfg, w) = entropic::explicit_argmin(t, &t.heights(), &g).map_err(to_py)?;
    let y = t.active_preorder().into_iter().map(|u| (u.0, w.get(u))).collect();
    Ok((
        PyConfiguration {
            inner: cfg,
            tree: t.clone(),
        },
        y,
    ))
}

/// The configuration the entropic policy holds on `tree`.
#[pyfunction]
fn entropic_target(tree: &PyTree) -> PyResult<PyConfiguration> {
    Ok(PyConfiguration {
        inner: entropic::EntropicPolicy::target(&tree.inner).map_err(to_py)?,
        tree: tree.inner.clone(),
    })
}

/// Tree optimal-transport distance between two configurations.
#[pyfunction]
fn ot_cost(a: &PyConfiguration, b: &PyConfiguration) -> f64 {
    config::ot_cost(&a.inner, &b.inner)
}

/// Moves `(from, to, mass, distance)` of an optimal coupling from `a` to `b`.
#[pyfunction]
fn ot_coupling(a: &PyConfiguration, b: &PyConfiguration) -> PyResult<Vec<(u32, u32, f64, usize)>> {
    let plan = config::ot_coupling(&a.inner, &b.inner, &b.tree).map_err(to_py)?;
    Ok(plan.moves.iter().map(|m| (m.from.0, m.to.0, m.mass, m.distance)).collect())
}

#[pyfunction]
fn ratio_ceiling(width: usize) -> f64 {
    entropic::ratio_ceiling(width)
}

/// Runs a numerical check suite; one dict per check.
#[pyfunction]
#[pyo3(signature = (suite="all", seed=42))]
fn run_checks<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let suite: verify::Suite = suite.parse().map_err(to_py)?;
    let reports = py
        .detach(|| verify::run_suite(suite, seed, verify::SweepSize::default()))
        .map_err(to_py)?;
    reports
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", r.name)?;
            d.set_item("instances", r.instances)?;
            d.set_item("worst", r.worst)?;
            d.set_item("threshold", r.threshold)?;
            d.set_item("pass", r.pass)?;
            d.set_item("note", r.note)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn lgt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_class::<PyConfiguration>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(randomized_stats, m)?)?;
    m.add_function(wrap_pyfunction!(run_adversary, m)?)?;
    m.add_function(wrap_pyfunction!(explicit_argmin, m)?)?;
    m.add_function(wrap_pyfunction!(entropic_target, m)?)?;
    m.add_function(wrap_pyfunction!(ot_cost, m)?)?;
    m.add_function(wrap_pyfunction!(ot_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_ceiling, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    Ok(())
}
