//! Randomized sweeps: many seeded runs over fault patterns and reader
//! counts, each checked, with counts merged into a summary.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{Action, AdversaryScript};
use crate::checker::{check_all, Budgets, CheckError, Report, ViolationClass};
use crate::constructions::{algo1, algo3, layout_of, BuildError, Layout};
use crate::model::{CellValue, FaultModel, ProcessId, RegisterSpec, SeqTuple, Value};
use crate::sim::{Operation, Scenario, Schedule, Sim, SimError, WorkloadItem};
use crate::trace::{OpKind, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultPattern {
    AllCorrect,
    WriterCrash,
    OneMaliciousReader,
    WriterCrashOneMaliciousReader,
    AllReadersMalicious,
    MaliciousWriter,
    /// ⌈n/2⌉+1 malicious readers (capped at n).
    MajorityMaliciousReaders,
}

const NAMES: &[(FaultPattern, &str)] = &[
    (FaultPattern::AllCorrect, "all-correct"),
    (FaultPattern::WriterCrash, "writer-crash"),
    (FaultPattern::OneMaliciousReader, "one-malicious-reader"),
    (FaultPattern::WriterCrashOneMaliciousReader, "writer-crash+one-malicious-reader"),
    (FaultPattern::AllReadersMalicious, "all-readers-malicious"),
    (FaultPattern::MaliciousWriter, "malicious-writer"),
    (FaultPattern::MajorityMaliciousReaders, "majority-malicious-readers"),
];

impl FaultPattern {
    pub const CANONICAL: [FaultPattern; 5] = [
        FaultPattern::AllCorrect,
        FaultPattern::WriterCrash,
        FaultPattern::OneMaliciousReader,
        FaultPattern::WriterCrashOneMaliciousReader,
        FaultPattern::AllReadersMalicious,
    ];

    pub const ALL: [FaultPattern; 7] = [
        FaultPattern::AllCorrect,
        FaultPattern::WriterCrash,
        FaultPattern::OneMaliciousReader,
        FaultPattern::WriterCrashOneMaliciousReader,
        FaultPattern::AllReadersMalicious,
        FaultPattern::MaliciousWriter,
        FaultPattern::MajorityMaliciousReaders,
    ];

    pub fn name(self) -> &'static str {
        NAMES.iter().find(|(p, _)| *p == self).map(|(_, s)| *s).expect("every pattern is named")
    }

    pub fn writer_malicious(self) -> bool {
        self == FaultPattern::MaliciousWriter
    }

    fn writer_crashes(self) -> bool {
        matches!(self, FaultPattern::WriterCrash | FaultPattern::WriterCrashOneMaliciousReader)
    }

    fn malicious_readers(self, n: u32) -> u32 {
        match self {
            FaultPattern::OneMaliciousReader | FaultPattern::WriterCrashOneMaliciousReader => 1,
            FaultPattern::AllReadersMalicious => n,
            FaultPattern::MajorityMaliciousReaders => (n.div_ceil(2) + 1).min(n),
            _ => 0,
        }
    }
}

impl fmt::Display for FaultPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown fault pattern {0:?}")]
pub struct UnknownPattern(pub String);

impl FromStr for FaultPattern {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NAMES.iter().find(|(_, n)| *n == s).map(|(p, _)| *p).ok_or_else(|| UnknownPattern(s.to_owned()))
    }
}

impl Serialize for FaultPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FaultPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub construction: String,
    pub ns: Vec<u32>,
    pub seed: u64,
    /// Runs per (n, pattern) cell; run i uses seed + i.
    pub runs: u64,
    pub patterns: Vec<FaultPattern>,
    pub step_budget: u64,
    pub per_op_budget: u64,
    pub max_writes: usize,
    pub max_reads: usize,
}

impl SweepConfig {
    pub fn new(construction: &str, ns: Vec<u32>, seed: u64, runs: u64, patterns: Vec<FaultPattern>) -> SweepConfig {
        SweepConfig {
            construction: construction.to_owned(),
            ns,
            seed,
            runs,
            patterns,
            step_budget: 200_000,
            per_op_budget: 20_000,
            max_writes: 3,
            max_reads: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one run")]
    NoRuns,
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("run n={n} pattern={pattern} seed={seed}: {source}")]
    Sim { n: u32, pattern: FaultPattern, seed: u64, source: SimError },
    #[error("run n={n} pattern={pattern} seed={seed}: {source}")]
    Check { n: u32, pattern: FaultPattern, seed: u64, source: CheckError },
}

/// Step counts of one completed honest top-level operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSteps {
    pub op: OpKind,
    pub register_steps: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub n: u32,
    pub pattern: FaultPattern,
    pub seed: u64,
    pub report: Report,
    /// Whether the run falls under the wait-freedom guarantee.
    pub guaranteed: bool,
    pub completed: Vec<OpSteps>,
}

impl RunResult {
    pub fn violations(&self) -> impl Iterator<Item = ViolationClass> + '_ {
        self.report.violations().map(|v| v.class)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub n: u32,
    pub pattern: String,
    pub seed: u64,
    pub class: String,
    pub explanation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: u64,
    pub violations: BTreeMap<String, u64>,
    pub pending_outside_guarantee: u64,
    pub inconclusive: u64,
    /// The first few failing runs, for reproduction.
    pub failures: Vec<Failure>,
}

impl SweepSummary {
    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }
}

const MAX_FAILURES: usize = 20;

pub fn summarize(results: &[RunResult]) -> SweepSummary {
    let mut s = SweepSummary { runs: results.len() as u64, ..Default::default() };
    for r in results {
        for v in r.report.violations() {
            *s.violations.entry(format!("{:?}", v.class)).or_default() += 1;
            if s.failures.len() < MAX_FAILURES {
                s.failures.push(Failure {
                    n: r.n,
                    pattern: r.pattern.to_string(),
                    seed: r.seed,
                    class: format!("{:?}", v.class),
                    explanation: v.explanation.clone(),
                });
            }
        }
        s.pending_outside_guarantee += u64::from(r.report.outside_guarantee());
        s.inconclusive += u64::from(!r.report.inconclusive.is_empty());
    }
    s
}

/// Runs every (n, pattern, seed) cell in parallel; results come back in cell order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<RunResult>, SweepError> {
    if cfg.runs == 0 {
        return Err(SweepError::NoRuns);
    }
    let mut jobs = Vec::new();
    for &n in &cfg.ns {
        let layout = layout_of(&cfg.construction, n, &Value::empty())?;
        for &pattern in &cfg.patterns {
            for i in 0..cfg.runs {
                jobs.push((n, pattern, cfg.seed.wrapping_add(i), layout.clone()));
            }
        }
    }
    jobs.into_par_iter().map(|(n, pattern, seed, layout)| run_one(cfg, n, pattern, seed, &layout)).collect()
}

fn run_one(
    cfg: &SweepConfig,
    n: u32,
    pattern: FaultPattern,
    seed: u64,
    layout: &Layout,
) -> Result<RunResult, SweepError> {
    let scenario = scenario_with_layout(cfg, n, pattern, seed, layout);
    let (trace, layout) = execute(&scenario).map_err(|source| SweepError::Sim { n, pattern, seed, source })?;
    let report = check_all(&trace, &layout, &scenario.faults, Budgets::of(&scenario))
        .map_err(|source| SweepError::Check { n, pattern, seed, source })?;
    let honest = |p: ProcessId| !scenario.fault(p).is_malicious();
    let completed = trace
        .top_level_ops()
        .into_iter()
        .filter(|o| o.respond_step.is_some() && honest(o.proc))
        .map(|o| OpSteps { op: o.op, register_steps: o.register_steps })
        .collect();
    let guaranteed = !pattern.writer_malicious() && !pattern.writer_crashes() || pattern.malicious_readers(n) == 0;
    Ok(RunResult { n, pattern, seed, report, guaranteed, completed })
}

pub fn execute(scenario: &Scenario) -> Result<(Trace, Layout), SimError> {
    let sim = Sim::new(scenario.clone())?;
    let layout = sim.layout().clone();
    Ok((sim.run()?, layout))
}

/// The scenario a sweep would run for one cell and seed.
pub fn scenario_for(cfg: &SweepConfig, n: u32, pattern: FaultPattern, seed: u64) -> Result<Scenario, BuildError> {
    let layout = layout_of(&cfg.construction, n, &Value::empty())?;
    Ok(scenario_with_layout(cfg, n, pattern, seed, &layout))
}

fn nominal_write_steps(construction: &str, n: u32) -> u64 {
    match construction {
        "algo1" => algo1::write_steps(n),
        "algo2" => 4,
        "algo3" => algo3::write_steps(n),
        _ => 3,
    }
}

fn scenario_with_layout(cfg: &SweepConfig, n: u32, pattern: FaultPattern, seed: u64, layout: &Layout) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe_f00d_d00d);
    let mut s = Scenario::new(&cfg.construction, n, seed);
    s.schedule = Schedule::Seeded { seed };
    s.step_budget = cfg.step_budget;
    s.per_op_budget = cfg.per_op_budget;

    let writes = rng.gen_range(0..=cfg.max_writes);
    let wsteps = nominal_write_steps(&cfg.construction, n);
    let mut readers: Vec<u32> = (1..=n).collect();
    readers.shuffle(&mut rng);
    let bad: Vec<ProcessId> = readers[..pattern.malicious_readers(n) as usize].iter().map(|&i| ProcessId(i)).collect();
    let good: Vec<u32> = readers[bad.len()..].to_vec();
    for &p in &bad {
        s.faults.insert(p, FaultModel::Malicious { script: random_script(&mut rng, p, layout, 0) });
    }
    if pattern.writer_crashes() {
        let total = wsteps * writes.max(1) as u64;
        let f = if rng.gen_bool(0.5) {
            FaultModel::CrashAfter { own_steps: rng.gen_range(0..=total) }
        } else {
            FaultModel::Crash { at_step: rng.gen_range(0..=total * 3) }
        };
        s.faults.insert(ProcessId::WRITER, f);
    }
    if pattern.writer_malicious() {
        let script = random_script(&mut rng, ProcessId::WRITER, layout, 0);
        s.faults.insert(ProcessId::WRITER, FaultModel::Malicious { script });
    }

    let spread = wsteps * (writes as u64 + 1) + 20 * n as u64;
    if !pattern.writer_malicious() {
        for i in 0..writes {
            let item =
                WorkloadItem::new(ProcessId::WRITER, Operation::Write { value: Value::text(&format!("v{}", i + 1)) });
            s.workload.push(item.starting_at(rng.gen_range(0..=spread / 2)));
        }
    }
    if !good.is_empty() {
        for _ in 0..rng.gen_range(0..=cfg.max_reads) {
            let r = good[rng.gen_range(0..good.len())];
            s.workload.push(WorkloadItem::read(r).starting_at(rng.gen_range(0..=spread)));
        }
    }
    s
}

const LIE_PAYLOADS: &[&str] = &["v1", "v2", "v3", "evil"];

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    if depth < 2 && rng.gen_bool(0.3) {
        Value::cell(random_cell(rng, depth + 1, None))
    } else {
        Value::text(LIE_PAYLOADS[rng.gen_range(0..LIE_PAYLOADS.len())])
    }
}

fn random_tuple(rng: &mut ChaCha8Rng, depth: u32) -> SeqTuple {
    SeqTuple::new(rng.gen_range(0..6), random_value(rng, depth))
}

/// A lie for register `spec`; its initial value (possibly signed) is fair game.
fn random_cell(rng: &mut ChaCha8Rng, depth: u32, spec: Option<&RegisterSpec>) -> CellValue {
    match rng.gen_range(0..7) {
        0 => CellValue::Commit(random_tuple(rng, depth)),
        1 => {
            let next = random_tuple(rng, depth);
            let prev = SeqTuple::new(next.k.saturating_sub(rng.gen_range(0..2)), random_value(rng, depth));
            CellValue::Prepare { prev, next }
        }
        2 | 3 => CellValue::Plain(random_tuple(rng, depth)),
        4 => CellValue::Bottom,
        5 => match spec {
            Some(s) => s.initial.clone(),
            None => CellValue::Bottom,
        },
        _ => CellValue::garbage(&[rng.gen(), rng.gen()]),
    }
}

/// A finite script built from random lies, resets, forwards, self-signed
/// tuples and replays over the registers `p` may touch.
pub fn random_script(rng: &mut ChaCha8Rng, p: ProcessId, layout: &Layout, depth: u32) -> AdversaryScript {
    let mine: Vec<&RegisterSpec> = layout.registers.iter().filter(|r| r.writer == p).collect();
    let visible: Vec<&RegisterSpec> = layout.registers.iter().filter(|r| r.readable_by(p)).collect();
    if mine.is_empty() {
        return AdversaryScript::Idle;
    }
    let len = rng.gen_range(1..=4);
    let mut parts = Vec::with_capacity(len);
    for _ in 0..len {
        let reg = mine[rng.gen_range(0..mine.len())];
        let part = match rng.gen_range(0..8) {
            0 => AdversaryScript::ResetAll,
            1 if !visible.is_empty() => {
                let from = visible[rng.gen_range(0..visible.len())].id.clone();
                AdversaryScript::Forward { from, to: reg.id.clone() }
            }
            2 => AdversaryScript::SignedLie { reg: reg.id.clone(), k: rng.gen_range(0..6), u: random_value(rng, 2) },
            3 if depth == 0 => random_script(rng, p, layout, depth + 1),
            4 => {
                let actions = (0..rng.gen_range(1..=3))
                    .map(|_| {
                        let r = mine[rng.gen_range(0..mine.len())];
                        if !visible.is_empty() && rng.gen_bool(0.3) {
                            Action::Read { reg: visible[rng.gen_range(0..visible.len())].id.clone() }
                        } else {
                            Action::Write { reg: r.id.clone(), value: random_cell(rng, 0, Some(r)) }
                        }
                    })
                    .collect();
                AdversaryScript::Replay { actions }
            }
            _ => AdversaryScript::LieValue { reg: reg.id.clone(), value: random_cell(rng, 0, Some(reg)) },
        };
        parts.push(part);
    }
    AdversaryScript::seq(parts)
}
