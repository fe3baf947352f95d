//! Experiment harness: generate instances, run the online engine with
//! certification, and sweep parameter grids into CSV reports.
//!
//! Exit codes: 0 on success, 2 on usage or validation problems, 3 when a
//! run's dual certificate fails verification (so CI can gate on
//! certification).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use cdr_alloc::{
    frank_wolfe, generate, run_online, verify_certificate, EngineError, Family, GenParams,
    Instance, Policy, QuadratureScheme, RunReport, FW_MAX_ITERS, FW_TOL,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cdr-alloc",
    version,
    about = "Fractional online allocation with certified competitive ratios"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Run one instance online, certify the result, and write a report.
    Run(RunArgs),
    /// Run a parameter grid and write one CSV row per run.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Instance family (triangular, concave_returns, whole_page,
    /// polymatroid_assignment, two_agent_tie, random_mixture).
    #[arg(long)]
    family: Family,
    /// Number of arrivals.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Family-specific size knob (agents, ground elements, …).
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Family-specific width knob (options per arrival, page slots, …).
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// RNG seed; the same seed always yields the same instance.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the instance JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Allocation policy: balanced (water filling on the transformed
    /// potential) or plain_greedy.
    #[arg(long, default_value_t = Policy::Balanced)]
    policy: Policy,
    /// Step size δ ∈ (0, 0.1] with 1/δ integral.
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    /// Quadrature nodes (odd, ≥ 33).
    #[arg(long, default_value_t = 257)]
    quad_nodes: usize,
    /// Lower integration cutoff (in (0, 1e-4]).
    #[arg(long, default_value_t = 1e-6)]
    t_min: f64,
    /// Ratio target γ for certificate verification. Defaults to 1−1/e for
    /// the balanced policy and 1/2 for plain_greedy.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Instance JSON produced by `gen` (or hand-written).
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Report path; defaults to the instance path with a .report.json
    /// suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance family to generate per grid point. Ignored when
    /// --instance is given.
    #[arg(long, default_value_t = Family::Triangular)]
    family: Family,
    /// Fixed instance file: the grid then covers only policies and deltas.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Arrival counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n: Vec<usize>,
    /// Family-specific size knob.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Family-specific width knob.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    /// Policies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "balanced")]
    policy: Vec<Policy>,
    /// Step sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    delta: Vec<f64>,
    /// Quadrature nodes (odd, ≥ 33), applied to every run.
    #[arg(long, default_value_t = 257)]
    quad_nodes: usize,
    /// Lower integration cutoff, applied to every run.
    #[arg(long, default_value_t = 1e-6)]
    t_min: f64,
    /// Ratio target γ; defaults per policy as in `run`.
    #[arg(long)]
    gamma: Option<f64>,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Certificate failures get their own exit code; everything else is a
/// usage/validation error.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<EngineError>() {
        Some(EngineError::InfeasibleDual { .. }) | Some(EngineError::RatioShortfall { .. }) => 3,
        _ => 2,
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let params = GenParams {
        n: args.n,
        m: args.m,
        k: args.k,
    };
    let instance = generate(args.family, params, args.seed)?;
    instance
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} ({} arrivals, {} coordinates)",
        args.out.display(),
        instance.n_arrivals(),
        instance.dim()
    );
    Ok(())
}

struct RunOutcome {
    report: RunReport,
    empirical_ratio: f64,
}

/// Runs one instance end to end: online allocation, certificate
/// verification at γ, and the offline lower bound for the empirical ratio.
fn execute(instance: &Instance<f64>, engine: &EngineArgs) -> Result<RunOutcome> {
    let scheme = QuadratureScheme::new(engine.quad_nodes, engine.t_min)?;
    let (_, cert, mut report) = run_online(instance, engine.policy, engine.delta, scheme)?;
    let gamma = engine
        .gamma
        .unwrap_or_else(|| engine.policy.default_gamma::<f64>());
    verify_certificate(&cert, gamma)?;
    let opt = frank_wolfe(instance, FW_MAX_ITERS, FW_TOL);
    report.opt_lower_bound = Some(opt.lower_bound);
    let empirical_ratio = if opt.lower_bound > f64::EPSILON {
        report.primal / opt.lower_bound
    } else {
        1.0
    };
    Ok(RunOutcome {
        report,
        empirical_ratio,
    })
}

fn load_instance(path: &Path) -> Result<Instance<f64>> {
    Instance::load(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let instance = load_instance(&args.instance)?;
    let outcome = execute(&instance, &args.engine)?;
    let out = args.out.unwrap_or_else(|| {
        let mut p = args.instance.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let json =
        serde_json::to_string_pretty(&outcome.report).context("serializing the run report")?;
    std::fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} {} {} {}",
        outcome.report.primal,
        outcome.report.dual,
        outcome.report.certified_ratio,
        outcome.empirical_ratio
    );
    Ok(())
}

/// One grid point of a sweep.
struct Task {
    family: String,
    n: usize,
    seed: u64,
    engine: EngineArgs,
    instance: Option<Instance<f64>>,
}

const SWEEP_HEADER: [&str; 12] = [
    "family",
    "n",
    "seed",
    "policy",
    "delta",
    "quad_nodes",
    "primal",
    "dual",
    "certified_ratio",
    "empirical_ratio",
    "wall_ms",
    "error",
];

fn sweep_row(task: &Task, base: &SweepArgs) -> Vec<String> {
    let mut row = vec![
        task.family.clone(),
        task.n.to_string(),
        task.seed.to_string(),
        task.engine.policy.to_string(),
        task.engine.delta.to_string(),
        base.quad_nodes.to_string(),
    ];
    let result = match &task.instance {
        Some(instance) => execute(instance, &task.engine),
        None => task
            .family
            .parse::<Family>()
            .map_err(anyhow::Error::from)
            .and_then(|family| {
                let params = GenParams {
                    n: task.n,
                    m: base.m,
                    k: base.k,
                };
                Ok(generate(family, params, task.seed)?)
            })
            .and_then(|instance| execute(&instance, &task.engine)),
    };
    match result {
        Ok(outcome) => {
            row.extend([
                outcome.report.primal.to_string(),
                outcome.report.dual.to_string(),
                outcome.report.certified_ratio.to_string(),
                outcome.empirical_ratio.to_string(),
                outcome.report.wall_ms.to_string(),
                String::new(),
            ]);
        }
        Err(err) => {
            row.extend([
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("{err:#}"),
            ]);
        }
    }
    row
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let fixed = args.instance.as_deref().map(load_instance).transpose()?;

    // Build the grid in sorted order so the CSV rows are deterministic.
    let mut ns = args.n.clone();
    let mut seeds = args.seed.clone();
    let mut deltas = args.delta.clone();
    let mut policies = args.policy.clone();
    ns.sort_unstable();
    ns.dedup();
    seeds.sort_unstable();
    seeds.dedup();
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    deltas.dedup();
    policies.sort_by_key(|p| p.to_string());
    policies.dedup();

    let mut tasks = Vec::new();
    let instance_axes: Vec<(String, usize, u64, Option<Instance<f64>>)> = match &fixed {
        Some(instance) => vec![(
            instance.meta.family.clone(),
            instance.n_arrivals(),
            instance.meta.seed,
            Some(instance.clone()),
        )],
        None => {
            let mut axes = Vec::new();
            for &n in &ns {
                for &seed in &seeds {
                    axes.push((args.family.to_string(), n, seed, None));
                }
            }
            axes
        }
    };
    for (family, n, seed, instance) in instance_axes {
        for &policy in &policies {
            for &delta in &deltas {
                tasks.push(Task {
                    family: family.clone(),
                    n,
                    seed,
                    engine: EngineArgs {
                        policy,
                        delta,
                        quad_nodes: args.quad_nodes,
                        t_min: args.t_min,
                        gamma: args.gamma,
                    },
                    instance: instance.clone(),
                });
            }
        }
    }
    if tasks.is_empty() {
        bail!("the sweep grid is empty");
    }

    // Fixed work queue: workers claim indices, rows land at their index, so
    // the output order never depends on scheduling.
    let rows: Vec<Mutex<Option<Vec<String>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = args.jobs.max(1).min(tasks.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let row = sweep_row(task, &args);
                *rows[i].lock().expect("row slot") = Some(row);
            });
        }
    });

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("opening {}", args.out.display()))?;
    writer.write_record(SWEEP_HEADER)?;
    let mut failures = 0usize;
    for slot in &rows {
        let row = slot
            .lock()
            .expect("row slot")
            .take()
            .expect("every task produces a row");
        if !row.last().expect("error column").is_empty() {
            failures += 1;
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    println!(
        "wrote {} ({} rows, {} failed)",
        args.out.display(),
        tasks.len(),
        failures
    );
    if failures == tasks.len() {
        bail!("every run in the sweep failed");
    }
    Ok(())
}
