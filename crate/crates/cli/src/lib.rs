//! Command-line front end: run a scenario, sweep random runs, attack a
//! candidate, or re-check a recorded trace.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use byzregs::adversary::{attack_search, AttackConfig, AttackOutcome, RegisterRule};
use byzregs::checker::{check_all, infer_outcome, Budgets, CheckError, Report};
use byzregs::sweep::{summarize, sweep, FaultPattern, SweepConfig, SweepError};
use byzregs::trace::read_events;
use byzregs::{Scenario, Schedule, Sim, SimError, Trace};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "byzregs", version, about = "Simulate and check Byzantine-tolerant register constructions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario and check the resulting trace.
    Run(RunArgs),
    /// Run and check many seeded random runs.
    Sweep(SweepArgs),
    /// Search for a violating execution of a candidate.
    Attack(AttackArgs),
    /// Check a recorded trace against the scenario that produced it.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replaces the seed of a seeded schedule.
    #[arg(long, env = "BYZREGS_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step_budget: Option<u64>,
    #[arg(long)]
    pub op_budget: Option<u64>,
    /// Where to write the trace, as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Where to write the verdicts; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub construction: String,
    /// A reader count or an inclusive range `A..B`.
    #[arg(long, value_parser = parse_n)]
    pub n: RangeInclusive<u32>,
    #[arg(long, env = "BYZREGS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub runs: u64,
    /// Comma-separated fault patterns; the canonical five if absent.
    #[arg(long, value_delimiter = ',')]
    pub faults: Vec<FaultPattern>,
    #[arg(long)]
    pub step_budget: Option<u64>,
    #[arg(long)]
    pub op_budget: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    NoFullRegisters,
    ReaderFullRegisters,
    Unrestricted,
}

impl From<RuleArg> for RegisterRule {
    fn from(r: RuleArg) -> RegisterRule {
        match r {
            RuleArg::NoFullRegisters => RegisterRule::NoFullRegisters,
            RuleArg::ReaderFullRegisters => RegisterRule::ReaderFullRegisters,
            RuleArg::Unrestricted => RegisterRule::Unrestricted,
        }
    }
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub construction: String,
    #[arg(long, default_value_t = 3)]
    pub n: u32,
    /// Steps one designated read may take before it counts as blocked.
    #[arg(long)]
    pub step_budget: Option<u64>,
    /// Register rule to enforce instead of the candidate's own.
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Where to write the witness trace, as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Attack(#[from] byzregs::adversary::AttackError),
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

pub fn parse_n(s: &str) -> Result<RangeInclusive<u32>, String> {
    let num = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("bad reader count {t:?}: {e}"));
    let r = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.trim_start_matches('='))?,
        None => {
            let n = num(s)?;
            n..=n
        }
    };
    if r.is_empty() {
        return Err(format!("empty range {s}"));
    }
    Ok(r)
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_owned(), source })
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    trace.write_jsonl(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn report_exit(r: &Report) -> i32 {
    if r.all_pass() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<i32, CliError> {
    let mut sc = load_scenario(&a.scenario)?;
    if let (Some(seed), Schedule::Seeded { .. }) = (a.seed, &sc.schedule) {
        sc.schedule = Schedule::Seeded { seed };
    }
    if let Some(b) = a.step_budget {
        sc.step_budget = b;
    }
    if let Some(b) = a.op_budget {
        sc.per_op_budget = b;
    }
    let sim = Sim::new(sc.clone())?;
    let layout = sim.layout().clone();
    let trace = sim.run()?;
    if let Some(p) = &a.trace {
        write_trace(&trace, p)?;
    }
    let report = check_all(&trace, &layout, &sc.faults, Budgets::of(&sc))?;
    emit(&report, a.out.as_deref())?;
    Ok(report_exit(&report))
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32, CliError> {
    let patterns = if a.faults.is_empty() { FaultPattern::CANONICAL.to_vec() } else { a.faults.clone() };
    let mut cfg = SweepConfig::new(&a.construction, a.n.clone().collect(), a.seed, a.runs, patterns);
    if let Some(b) = a.step_budget {
        cfg.step_budget = b;
    }
    if let Some(b) = a.op_budget {
        cfg.per_op_budget = b;
    }
    let summary = summarize(&sweep(&cfg)?);
    emit(&summary, a.out.as_deref())?;
    Ok(if summary.total_violations() == 0 { EXIT_PASS } else { EXIT_VIOLATION })
}

pub fn cmd_attack(a: &AttackArgs) -> Result<i32, CliError> {
    let mut cfg = AttackConfig::new(a.n);
    if let Some(b) = a.step_budget {
        cfg.stage_budget = b;
    }
    cfg.rule = a.rule.map(RegisterRule::from);
    let report = attack_search(&a.construction, &cfg)?;
    if let (Some(p), AttackOutcome::ViolationWitness(w) | AttackOutcome::BlockedWitness(w)) =
        (&a.trace, &report.outcome)
    {
        write_trace(&w.trace, p)?;
    }
    emit(&report, a.out.as_deref())?;
    Ok(if report.outcome.is_witness() { EXIT_VIOLATION } else { EXIT_PASS })
}

pub fn cmd_check(a: &CheckArgs) -> Result<i32, CliError> {
    let sc = load_scenario(&a.scenario)?;
    let f = File::open(&a.trace).map_err(io_err(&a.trace))?;
    let events = read_events(BufReader::new(f)).map_err(io_err(&a.trace))?;
    let layout = Sim::new(sc.clone())?.layout().clone();
    let outcome = infer_outcome(&events, &sc);
    let trace = Trace { events, outcome };
    let report = check_all(&trace, &layout, &sc.faults, Budgets::of(&sc))?;
    emit(&report, a.out.as_deref())?;
    Ok(report_exit(&report))
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let r = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Check(a) => cmd_check(a),
    };
    r.unwrap_or_else(|e| {
        eprintln!("byzregs: {e}");
        EXIT_ERROR
    })
}
