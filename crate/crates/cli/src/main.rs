use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lgt_core::adversaries::{
    gen_alternating, gen_comb, gen_random, gen_star, load_instance, save_instance, AdaptiveAdversary, AdversaryKind,
    Instance,
};
use lgt_core::harness::{
    run, run_randomized, write_report, InstanceSource, Mode, ReportFormat, RunConfig, Trace, WidthSource,
};
use lgt_core::verify::{check_potential_inequality, potential_tolerance, run_suite, Suite, SweepSize};
use lgt_core::{LgtError, PolicyKind};

const SPLIT_PROB: f64 = 0.4;
const KILL_PROB: f64 = 0.25;

#[derive(Parser)]
#[command(name = "lgt", version, about = "Layered tree traversal: instances, runs, checks and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Run one policy on an instance file or against an adaptive adversary.
    Run(RunArgs),
    /// Run the numerical checks; exits 2 if any fails.
    Verify(VerifyArgs),
    /// Sweep widths x families x policies and write one report.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Family {
    Star,
    Comb,
    Alternating,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Policy {
    Entropic,
    Dfs,
    RandomDfs,
    Uniform,
}

impl From<Policy> for PolicyKind {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Entropic => PolicyKind::Entropic,
            Policy::Dfs => PolicyKind::Dfs,
            Policy::RandomDfs => PolicyKind::RandomDfs,
            Policy::Uniform => PolicyKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Adversary {
    MaxMass,
    DfsLengths,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RunMode {
    Fractional,
    Randomized,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Width {
    Instance,
    RunningMax,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SuiteArg {
    All,
    Lemma1,
    Dynamics,
    Movement,
    Growth,
    Potential,
    Identity,
}

#[derive(Args)]
struct GenArgs {
    family: Family,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    policy: Policy,
    #[arg(long, conflicts_with = "adversary", required_unless_present = "adversary")]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, requires = "depth")]
    adversary: Option<Adversary>,
    /// Adversary width.
    #[arg(long, default_value_t = 2)]
    width: usize,
    /// Adversary horizon.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_enum, default_value = "fractional")]
    mode: RunMode,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record the potential even for policies other than entropic.
    #[arg(long)]
    monitor_potential: bool,
    #[arg(long, value_enum, default_value = "instance")]
    width_source: Width,
    #[arg(long)]
    report: PathBuf,
    /// Defaults to the report's extension, then csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    widths: Vec<usize>,
    #[arg(long)]
    depth: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "entropic,dfs,random_dfs,uniform")]
    policies: Vec<Policy>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "star,comb,alternating,random")]
    families: Vec<Family>,
    #[arg(long, value_enum, default_value = "fractional")]
    mode: RunMode,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

enum Outcome {
    Success,
    Violation(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("invariant violated: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn generate(family: Family, width: usize, depth: usize, seed: u64) -> Result<Instance, LgtError> {
    match family {
        Family::Star => gen_star(width, depth),
        Family::Comb => gen_comb(width, depth),
        Family::Alternating => gen_alternating(depth),
        Family::Random => gen_random(width, depth, seed, SPLIT_PROB, KILL_PROB),
    }
}

fn gen(a: GenArgs) -> Result<Outcome, LgtError> {
    let width = match (a.family, a.width) {
        (Family::Alternating, _) => 3,
        (_, Some(w)) => w,
        (_, None) => return Err(LgtError::MalformedInput("--width is required for this family".into())),
    };
    let inst = generate(a.family, width, a.depth, a.seed)?;
    save_instance(&inst, &a.output)?;
    eprintln!("{}: width {}, depth {}", inst.name, inst.width, inst.depth());
    Ok(Outcome::Success)
}

fn format_for(path: &Path, explicit: Option<Format>) -> ReportFormat {
    match explicit {
        Some(Format::Csv) => ReportFormat::Csv,
        Some(Format::Json) => ReportFormat::Json,
        None if path.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
        None => ReportFormat::Csv,
    }
}

/// Writes the report to a temporary file beside `path`, then renames it.
fn write_atomically(traces: &[Trace], format: ReportFormat, path: &Path) -> Result<(), LgtError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_report(traces, format, std::io::BufWriter::new(tmp.as_file_mut()))?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| LgtError::Io(e.error))?;
    Ok(())
}

fn monitor_outcome(traces: &[Trace]) -> Result<Outcome, LgtError> {
    for tr in traces {
        if tr.steps.iter().all(|s| s.potential.is_none()) {
            continue;
        }
        let slack = check_potential_inequality(tr)?;
        if slack < -potential_tolerance(tr) {
            return Ok(Outcome::Violation(format!(
                "{}: cumulative cost exceeds the potential by {:.3e}",
                tr.run_id, -slack
            )));
        }
    }
    Ok(Outcome::Success)
}

fn run_config(policy: PolicyKind, mode: RunMode, trials: usize, seed: u64) -> Result<RunConfig, LgtError> {
    let mut cfg = RunConfig::new(policy);
    cfg.seed = seed;
    if mode == RunMode::Randomized {
        if trials == 0 {
            return Err(LgtError::MalformedInput("--trials must be at least 1".into()));
        }
        cfg.mode = Mode::Randomized;
        cfg.trials = trials;
    }
    Ok(cfg)
}

fn run_cmd(a: RunArgs) -> Result<Outcome, LgtError> {
    let mut cfg = run_config(a.policy.into(), a.mode, a.trials, a.seed)?;
    cfg.potential_monitor |= a.monitor_potential;
    if a.width_source == Width::RunningMax {
        cfg.width_source = WidthSource::RunningMax;
    }
    let format = format_for(&a.report, a.format);
    let trace = match (&a.instance, a.adversary) {
        (Some(path), _) => {
            let inst = load_instance(path)?;
            if cfg.mode == Mode::Randomized {
                let stats = run_randomized(&inst, &cfg)?;
                eprintln!(
                    "{} trials: mean cost {:.6} ± {:.6} (fractional {:.6})",
                    cfg.trials, stats.mean_cost, stats.stderr, stats.fractional_cost
                );
                stats.trace
            } else {
                run(InstanceSource::Offline(&inst), &cfg)?
            }
        }
        (None, Some(kind)) => {
            if cfg.mode == Mode::Randomized {
                return Err(LgtError::MalformedInput(
                    "adaptive adversaries run in fractional mode only".into(),
                ));
            }
            let kind = match kind {
                Adversary::MaxMass => AdversaryKind::MaxMass,
                Adversary::DfsLengths => AdversaryKind::DfsLengths,
            };
            let depth = a.depth.expect("clap requires --depth with --adversary");
            let mut adv = AdaptiveAdversary::new(kind, a.width, depth)?;
            run(InstanceSource::Adaptive(&mut adv), &cfg)?
        }
        (None, None) => unreachable!("clap requires --instance or --adversary"),
    };
    write_atomically(std::slice::from_ref(&trace), format, &a.report)?;
    eprintln!(
        "{}: cost {:.6} over {} layers, ratio {:.6}",
        trace.run_id,
        trace.total_cost(),
        trace.steps.len(),
        trace.final_ratio()
    );
    monitor_outcome(std::slice::from_ref(&trace))
}

fn verify(a: VerifyArgs) -> Result<Outcome, LgtError> {
    let suite = match a.suite {
        SuiteArg::All => Suite::All,
        SuiteArg::Lemma1 => Suite::Lemma1,
        SuiteArg::Dynamics => Suite::Dynamics,
        SuiteArg::Movement => Suite::Movement,
        SuiteArg::Growth => Suite::Growth,
        SuiteArg::Potential => Suite::Potential,
        SuiteArg::Identity => Suite::Identity,
    };
    let reports = run_suite(suite, a.seed, SweepSize::default())?;
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Violation(format!("failed checks: {}", failed.join(", "))))
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, LgtError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LGT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| LgtError::MalformedInput(format!("LGT_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| LgtError::MalformedInput(format!("thread pool: {e}")))
}

fn bench(a: BenchArgs) -> Result<Outcome, LgtError> {
    if a.widths.is_empty() || a.policies.is_empty() || a.families.is_empty() {
        return Err(LgtError::MalformedInput("empty sweep".into()));
    }
    let mut instances = Vec::new();
    for &w in &a.widths {
        for &f in &a.families {
            if f == Family::Alternating && instances.iter().any(|(fam, _): &(Family, Instance)| *fam == f) {
                continue;
            }
            instances.push((f, generate(f, w, a.depth, a.seed)?));
        }
    }
    let mut cells = Vec::new();
    for (_, inst) in &instances {
        for &p in &a.policies {
            let mut cfg = run_config(p.into(), a.mode, a.trials, a.seed)?;
            cfg.run_id = Some(format!("{}:{}", PolicyKind::from(p), inst.name));
            cells.push((inst, cfg));
        }
    }
    let pool = thread_pool()?;
    let traces: Vec<Trace> = pool.install(|| {
        cells
            .par_iter()
            .map(|(inst, cfg)| match cfg.mode {
                Mode::Fractional => run(InstanceSource::Offline(inst), cfg),
                Mode::Randomized => run_randomized(inst, cfg).map(|s| s.trace),
            })
            .collect::<Result<_, _>>()
    })?;
    write_atomically(&traces, format_for(&a.report, a.format), &a.report)?;
    for tr in &traces {
        println!("{:<12} {:<40} ratio {:>10.4}", tr.policy, tr.instance, tr.final_ratio());
    }
    monitor_outcome(&traces)
}
