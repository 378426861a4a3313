use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sleepy_consensus::ProtocolKind;
use sleepy_harness::sweep::FExpr;
use sleepy_harness::{
    experiment::recheck_trace, run_experiment, run_sweep, AdversarySpec, ExperimentConfig,
    HarnessError, InputSpec, SweepConfig,
};

/// Exit status when a run finishes with invariant violations.
const EXIT_VIOLATIONS: u8 = 1;
/// Exit status for configuration, I/O and parse errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "sleepy",
    version,
    about = "Crash-tolerant consensus in the sleeping model"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every point of a parameter grid and write one row per point.
    Sweep(SweepArgs),
    /// Re-check every run stored in a JSONL trace.
    Recheck { trace: PathBuf },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Input generator: `3,1,4,2`, `all0`, `all1`, `onehot:I` or `rand:SEED`.
    #[arg(long, default_value = "all1")]
    inputs: InputSpec,
    /// Input draws per configuration.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// CSV metrics output.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Summary JSON output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Run the invariant checkers (the default).
    #[arg(long, overrides_with = "no_check")]
    check: bool,
    /// Skip the invariant checkers.
    #[arg(long = "no-check")]
    no_check: bool,
    /// Worker threads; defaults to SLEEPY_WORKERS, then to the core count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    f: Option<u32>,
    /// `none`, `rand:SEED:COUNT`, `chain` or `exhaustive:BUDGET`.
    #[arg(long, default_value = "none")]
    adversary: AdversarySpec,
    /// Committee size override for the binary protocol.
    #[arg(long)]
    k: Option<u32>,
    /// Replay a crash schedule from a file instead of using the adversary.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// JSONL trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    protocol: Vec<ProtocolKind>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u32>,
    /// Fault bounds: integers or `n-D` / `n/D`.
    #[arg(long, value_delimiter = ',', required = true)]
    f: Vec<FExpr>,
    /// Binary committee sizes.
    #[arg(long, value_delimiter = ',')]
    k: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "none")]
    adversary: Vec<AdversarySpec>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_VIOLATIONS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u64, HarnessError> {
    match cli.command {
        Some(Command::Sweep(args)) => sweep(args),
        Some(Command::Recheck { trace }) => recheck(&trace),
        None => run(cli.run),
    }
}

fn run(args: RunArgs) -> Result<u64, HarnessError> {
    let missing = |flag: &str| HarnessError::config(format!("--{flag} is required"));
    let mut cfg = ExperimentConfig::new(
        args.protocol.ok_or_else(|| missing("protocol"))?,
        args.n.ok_or_else(|| missing("n"))?,
        args.f.ok_or_else(|| missing("f"))?,
        args.common.inputs,
    );
    cfg.adversary = args.adversary;
    cfg.k = args.k;
    cfg.trials = args.common.trials;
    cfg.schedule = args.schedule;
    cfg.trace = args.trace;
    cfg.metrics = args.common.metrics;
    cfg.summary = args.common.summary;
    cfg.check = args.common.check || !args.common.no_check;
    cfg.workers = args.common.workers;
    let out = run_experiment(&cfg)?;
    let s = &out.summary;
    println!(
        "trials={} max_energy={} max_messages={} violations={}",
        s.trials, s.max_energy, s.max_messages, s.violations
    );
    for (kind, count) in &s.violations_by_kind {
        println!("  violation {kind}: {count}");
    }
    for (kind, count) in &s.flags_by_kind {
        println!("  analysis flag {kind}: {count}");
    }
    Ok(s.violations)
}

fn sweep(args: SweepArgs) -> Result<u64, HarnessError> {
    let mut cfg = SweepConfig::new(args.protocol, args.n, args.f);
    cfg.ks = args.k;
    cfg.adversaries = args.adversary;
    cfg.inputs = args.common.inputs;
    cfg.trials = args.common.trials;
    cfg.check = args.common.check || !args.common.no_check;
    cfg.workers = args.common.workers;
    cfg.metrics = args.common.metrics;
    cfg.summary = args.common.summary;
    let out = run_sweep(&cfg)?;
    for r in &out.rows {
        println!(
            "{} n={} f={} k={} adversary={} max_energy={} max_messages={} violations={}",
            r.protocol, r.n, r.f, r.k, r.adversary, r.max_energy, r.max_messages, r.violations
        );
    }
    for b in &out.best_k {
        println!(
            "best k for n={} f={}: {} (max_energy={})",
            b.n, b.f, b.k, b.max_energy
        );
    }
    Ok(out.violations)
}

fn recheck(path: &PathBuf) -> Result<u64, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let verdicts = recheck_trace(&text)?;
    let mut total = 0;
    for (i, v) in verdicts.iter().enumerate() {
        total += v.len() as u64;
        for violation in v {
            println!("run {i}: {violation}");
        }
    }
    println!("runs={} violations={total}", verdicts.len());
    Ok(total)
}
