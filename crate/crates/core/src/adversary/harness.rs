//! Record-replay search for an execution in which a correct reader returns
//! the writer's value although the writer took no register steps.
//!
//! Executions are built from a plan: how far the writer gets before it
//! crashes, followed by phases in which one process at a time replays
//! recorded accesses, resets its registers, or performs a fresh Read. Every
//! plan is re-simulated from scratch, so indistinguishability reduces to
//! determinism of the candidate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::candidates::{candidate, RegisterRule};
use super::script::{Action, AdversaryScript};
use crate::checker::{check_bottom_returns, check_property1, check_property2, History, ViolationClass};
use crate::constructions::Layout;
use crate::model::{FaultModel, ProcessId, RegId, RegisterSpec, Value};
use crate::sim::{Operation, Phase, Scenario, Schedule, Sim, SimError, WorkloadItem};
use crate::trace::{EventKind, OpKind, ReadReturn, Trace};

pub const DEFAULT_STAGE_BUDGET: u64 = 100_000;
pub const DEFAULT_MAX_EXECUTIONS: usize = 20_000;
/// Payload of the one write; a read "returns 1" iff it returns this value.
pub const MARKER: &str = "1";

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),
    #[error("the attack needs at least 3 readers, got n = {n}")]
    TooFewReaders { n: u32 },
    #[error("candidate {candidate} breaks the {rule:?} rule with register {reg}")]
    RuleViolation { candidate: String, rule: RegisterRule, reg: RegId },
    #[error("the solo write did not finish within {budget} steps")]
    WriterBlocked { budget: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Invoke,
    Read,
    Write,
    Respond,
}

/// One step of the writer's solo write.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriterStep {
    pub index: u64,
    pub kind: StepKind,
    pub reg: Option<RegId>,
}

/// Readers that cannot observe `step`: everybody, unless it writes a
/// register they can read.
pub fn invisible_to(step: &WriterStep, specs: &[RegisterSpec], n: u32) -> BTreeSet<ProcessId> {
    let all = (1..=n).map(ProcessId::reader);
    match (step.kind, &step.reg) {
        (StepKind::Write, Some(reg)) => match specs.iter().find(|s| &s.id == reg) {
            Some(spec) => all.filter(|p| !spec.readers.contains(p)).collect(),
            None => BTreeSet::new(),
        },
        _ => all.collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoloWrite {
    pub trace: Trace,
    /// `s^0` (invocation) through `s^{m+1}` (response).
    pub steps: Vec<WriterStep>,
}

impl SoloWrite {
    /// Number of register steps in the write.
    pub fn m(&self) -> u64 {
        self.steps.len() as u64 - 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageLabel {
    S,
    A,
    B,
    C,
    D,
    E,
    F,
    /// `A_0` with the invocation removed as well: the writer does nothing.
    #[serde(rename = "A0'")]
    A0Silent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationStage {
    pub label: StageLabel,
    pub k: u64,
    pub malicious: Option<ProcessId>,
    pub reader: Option<ProcessId>,
    /// The reader `r` of C/D/E/F stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<ProcessId>,
    pub z: Vec<ProcessId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum StageResult {
    Done,
    /// Every designated read returned the marker.
    ReadMarker,
    ReadOther {
        reader: ProcessId,
        ret: ReadReturn,
    },
    Blocked {
        reader: ProcessId,
    },
    Failed {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: TransformationStage,
    pub result: StageResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub stage: TransformationStage,
    pub class: ViolationClass,
    pub explanation: String,
    pub trace: Trace,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AttackOutcome {
    ViolationWitness(Witness),
    BlockedWitness(Witness),
    Exhausted { executions: usize, reason: String },
}

impl AttackOutcome {
    pub fn is_witness(&self) -> bool {
        !matches!(self, AttackOutcome::Exhausted { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackOutcome::ViolationWitness(_) => "ViolationWitness",
            AttackOutcome::BlockedWitness(_) => "BlockedWitness",
            AttackOutcome::Exhausted { .. } => "Exhausted",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackReport {
    pub candidate: String,
    pub n: u32,
    pub rule: RegisterRule,
    pub writer_steps: u64,
    pub executions: usize,
    pub outcome: AttackOutcome,
    pub log: Vec<StageRecord>,
}

#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub n: u32,
    /// Register steps one designated read may take before it counts as blocked.
    pub stage_budget: u64,
    pub max_executions: usize,
    /// Overrides the candidate's registered rule.
    pub rule: Option<RegisterRule>,
}

impl AttackConfig {
    pub fn new(n: u32) -> AttackConfig {
        AttackConfig { n, stage_budget: DEFAULT_STAGE_BUDGET, max_executions: DEFAULT_MAX_EXECUTIONS, rule: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WriterPart {
    Idle,
    CrashAfter(u64),
    Complete,
}

#[derive(Clone, Debug)]
enum Part {
    Replay(ProcessId, Vec<Action>),
    Reset(ProcessId),
    Read(ProcessId),
}

#[derive(Clone, Debug)]
struct Plan {
    writer: WriterPart,
    parts: Vec<Part>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum ReadResult {
    Marker,
    Other(ReadReturn),
    Blocked,
}

struct Execution {
    trace: Trace,
    faults: BTreeMap<ProcessId, FaultModel>,
    reads: Vec<(ProcessId, ReadResult)>,
}

impl Execution {
    fn read(&self, p: ProcessId) -> &ReadResult {
        &self.reads.iter().find(|(q, _)| *q == p).expect("planned read").1
    }

    fn actions_of(&self, p: ProcessId) -> Vec<Action> {
        actions_of(&self.trace, p)
    }
}

/// Register accesses of `p` in `trace`, as a replayable script.
pub fn actions_of(trace: &Trace, p: ProcessId) -> Vec<Action> {
    trace
        .events
        .iter()
        .filter(|e| e.proc == p)
        .filter_map(|e| match (e.kind, &e.reg) {
            (EventKind::RegRead, Some(reg)) => Some(Action::Read { reg: reg.clone() }),
            (EventKind::RegWrite, Some(reg)) => {
                Some(Action::Write { reg: reg.clone(), value: e.value.clone().expect("writes carry a value") })
            }
            _ => None,
        })
        .collect()
}

/// A process state in the proof: the writer got through `s^k`, `malicious`
/// behaves as `replay`, and `reader` then returned the marker.
#[derive(Clone, Debug)]
struct Node {
    k: u64,
    malicious: ProcessId,
    reader: ProcessId,
    replay: Vec<Action>,
}

struct Search {
    name: String,
    n: u32,
    budget: u64,
    max_executions: usize,
    layout: Layout,
    solo: SoloWrite,
    executions: usize,
    log: Vec<StageRecord>,
}

enum Found {
    Outcome(Box<AttackOutcome>),
    Dead,
}

fn run_plan(name: &str, n: u32, budget: u64, layout: &Layout, plan: &Plan) -> Result<Execution, SimError> {
    let mut sc = Scenario::new(name, n, 0);
    sc.u0 = Value::empty();
    sc.per_op_budget = budget;
    sc.step_budget = budget.saturating_mul(plan.parts.len() as u64 + 2) + 10_000;
    let mut phases = Vec::new();
    let mut scripts: BTreeMap<ProcessId, Vec<AdversaryScript>> = BTreeMap::new();
    match plan.writer {
        WriterPart::Idle => {}
        WriterPart::CrashAfter(k) => {
            sc.faults.insert(ProcessId::WRITER, FaultModel::CrashAfter { own_steps: k });
        }
        WriterPart::Complete => {}
    }
    if plan.writer != WriterPart::Idle {
        sc.workload.push(WorkloadItem::write(MARKER));
        phases.push(Phase { proc: ProcessId::WRITER, steps: None });
    }
    let mut readers = Vec::new();
    for part in &plan.parts {
        match part {
            Part::Replay(p, actions) => {
                scripts.entry(*p).or_default().push(AdversaryScript::Replay { actions: actions.clone() });
                phases.push(Phase { proc: *p, steps: Some(actions.len() as u64) });
            }
            Part::Reset(p) => {
                scripts.entry(*p).or_default().push(AdversaryScript::ResetAll);
                let owned = layout.registers.iter().filter(|r| r.writer == *p).count() as u64;
                phases.push(Phase { proc: *p, steps: Some(owned) });
            }
            Part::Read(p) => {
                sc.workload.push(WorkloadItem::new(*p, Operation::Read));
                phases.push(Phase { proc: *p, steps: None });
                readers.push(*p);
            }
        }
    }
    for (p, s) in scripts {
        sc.faults.insert(p, FaultModel::Malicious { script: AdversaryScript::seq(s) });
    }
    sc.schedule = Schedule::Phased { phases };
    let faults = sc.faults.clone();
    let trace = Sim::new(sc)?.run()?;
    let marker = Value::text(MARKER);
    let reads = readers
        .into_iter()
        .map(|p| {
            let ret = trace
                .events
                .iter()
                .find(|e| e.proc == p && e.kind == EventKind::Respond && e.op == Some(OpKind::Read) && e.reg.is_none())
                .and_then(|e| e.ret.clone());
            let r = match ret {
                None => ReadResult::Blocked,
                Some(ret) if ret.value() == Some(&marker) => ReadResult::Marker,
                Some(ret) => ReadResult::Other(ret),
            };
            (p, r)
        })
        .collect();
    Ok(Execution { trace, faults, reads })
}

fn writer_steps(trace: &Trace) -> Vec<WriterStep> {
    let mut out = Vec::new();
    for e in trace.events.iter().filter(|e| e.proc == ProcessId::WRITER) {
        let kind = match e.kind {
            // Nested operations are bookkeeping, not steps.
            EventKind::Invoke | EventKind::Respond if e.reg.is_some() => continue,
            EventKind::Invoke => StepKind::Invoke,
            EventKind::RegRead => StepKind::Read,
            EventKind::RegWrite => StepKind::Write,
            EventKind::Respond => StepKind::Respond,
            _ => continue,
        };
        out.push(WriterStep { index: out.len() as u64, kind, reg: e.reg.clone() });
    }
    out
}

/// Runs a complete `Write(1)` by the writer while every reader stays idle.
pub fn record_solo_write(name: &str, n: u32, budget: u64) -> Result<SoloWrite, AttackError> {
    let layout = Sim::new(Scenario::new(name, n, 0))?.layout().clone();
    let exec = run_plan(name, n, budget, &layout, &Plan { writer: WriterPart::Complete, parts: Vec::new() })?;
    let steps = writer_steps(&exec.trace);
    if steps.last().map(|s| s.kind) != Some(StepKind::Respond) {
        return Err(AttackError::WriterBlocked { budget });
    }
    Ok(SoloWrite { trace: exec.trace, steps })
}

/// Searches for a linearizability or wait-freedom violation of `name`
/// following the crash-and-replay transformations, readers in ascending order.
pub fn attack_search(name: &str, cfg: &AttackConfig) -> Result<AttackReport, AttackError> {
    let cand = candidate(name).ok_or_else(|| AttackError::UnknownCandidate(name.to_owned()))?;
    let rule = cfg.rule.unwrap_or(cand.rule);
    if cfg.n < 3 {
        return Err(AttackError::TooFewReaders { n: cfg.n });
    }
    let layout = Sim::new(Scenario::new(name, cfg.n, 0))?.layout().clone();
    if let Some(reg) = rule.violation(&layout, cfg.n) {
        return Err(AttackError::RuleViolation { candidate: name.to_owned(), rule, reg: reg.id.clone() });
    }
    let solo = record_solo_write(name, cfg.n, cfg.stage_budget)?;
    let mut s = Search {
        name: name.to_owned(),
        n: cfg.n,
        budget: cfg.stage_budget,
        max_executions: cfg.max_executions,
        layout,
        solo,
        executions: 1,
        log: Vec::new(),
    };
    s.log.push(StageRecord {
        stage: TransformationStage {
            label: StageLabel::S,
            k: s.solo.m() + 1,
            malicious: None,
            reader: None,
            r: None,
            z: Vec::new(),
        },
        result: StageResult::Done,
    });
    let outcome = match s.start() {
        Found::Outcome(o) => *o,
        Found::Dead => AttackOutcome::Exhausted { executions: s.executions, reason: "every branch failed".to_owned() },
    };
    Ok(AttackReport {
        candidate: name.to_owned(),
        n: cfg.n,
        rule,
        writer_steps: s.solo.m(),
        executions: s.executions,
        outcome,
        log: s.log,
    })
}

impl Search {
    fn readers(&self) -> Vec<ProcessId> {
        (1..=self.n).map(ProcessId::reader).collect()
    }

    fn z(&self, out: &[ProcessId]) -> Vec<ProcessId> {
        self.readers().into_iter().filter(|p| !out.contains(p)).collect()
    }

    fn stage(
        &self,
        label: StageLabel,
        k: u64,
        malicious: ProcessId,
        reader: ProcessId,
        r: Option<ProcessId>,
    ) -> TransformationStage {
        let mut out = vec![malicious, reader];
        out.extend(r);
        TransformationStage { label, k, malicious: Some(malicious), reader: Some(reader), r, z: self.z(&out) }
    }

    fn invisible(&self, i: u64) -> BTreeSet<ProcessId> {
        invisible_to(&self.solo.steps[i as usize], &self.layout.registers, self.n)
    }

    fn writer_part(&self, k: u64) -> WriterPart {
        if k > self.solo.m() {
            WriterPart::Complete
        } else {
            WriterPart::CrashAfter(k)
        }
    }

    /// Runs a plan and logs it. `Err` carries the finished search result
    /// (budget exhaustion) or a dead branch.
    fn exec(&mut self, stage: &TransformationStage, plan: Plan) -> Result<Execution, Found> {
        if self.executions >= self.max_executions {
            return Err(Found::Outcome(Box::new(AttackOutcome::Exhausted {
                executions: self.executions,
                reason: format!("execution cap {} reached", self.max_executions),
            })));
        }
        self.executions += 1;
        match run_plan(&self.name, self.n, self.budget, &self.layout, &plan) {
            Ok(e) => Ok(e),
            Err(err) => {
                self.fail(stage, err.to_string());
                Err(Found::Dead)
            }
        }
    }

    fn fail(&mut self, stage: &TransformationStage, reason: String) {
        self.log.push(StageRecord { stage: stage.clone(), result: StageResult::Failed { reason } });
    }

    /// Logs the reads of an execution in which every designated reader is
    /// correct and runs alone. A blocked read or a read contradicting the
    /// register properties ends the search.
    fn settle(&mut self, stage: &TransformationStage, exec: &Execution) -> Option<Found> {
        for (p, r) in &exec.reads {
            match r {
                ReadResult::Marker => {}
                ReadResult::Blocked => {
                    self.log.push(StageRecord { stage: stage.clone(), result: StageResult::Blocked { reader: *p } });
                    return Some(Found::Outcome(Box::new(AttackOutcome::BlockedWitness(Witness {
                        stage: stage.clone(),
                        class: ViolationClass::WaitFreedom,
                        explanation: format!(
                            "read by correct reader {p} did not complete within {} steps while it ran alone",
                            self.budget
                        ),
                        trace: exec.trace.clone(),
                    }))));
                }
                ReadResult::Other(ret) => {
                    self.log.push(StageRecord {
                        stage: stage.clone(),
                        result: StageResult::ReadOther { reader: *p, ret: ret.clone() },
                    });
                    if let Some((class, explanation)) = self.violated(exec) {
                        return Some(Found::Outcome(Box::new(AttackOutcome::ViolationWitness(Witness {
                            stage: stage.clone(),
                            class,
                            explanation,
                            trace: exec.trace.clone(),
                        }))));
                    }
                    return Some(Found::Dead);
                }
            }
        }
        self.log.push(StageRecord { stage: stage.clone(), result: StageResult::ReadMarker });
        None
    }

    fn violated(&self, exec: &Execution) -> Option<(ViolationClass, String)> {
        let h = History::from_events(&exec.trace.events, self.layout.root(), &exec.faults).ok()?;
        [check_property1(&h, true), check_property2(&h, true), check_bottom_returns(&h, &exec.faults)]
            .into_iter()
            .find(|v| !v.is_pass())
            .map(|v| (v.class, v.explanation))
    }

    /// Confirms that `exec` has the property claimed for `node`: the writer
    /// took exactly its first `k` steps, and the designated reader is correct,
    /// returned the marker and cannot see `s^k`.
    fn sound(&self, node: &Node, exec: &Execution) -> Result<(), String> {
        if exec.faults.get(&node.reader).is_some_and(FaultModel::is_malicious) {
            return Err(format!("designated reader {} is malicious", node.reader));
        }
        if exec.read(node.reader) != &ReadResult::Marker {
            return Err(format!("designated reader {} did not return the marker", node.reader));
        }
        if !self.invisible(node.k).contains(&node.reader) {
            return Err(format!("s^{} is visible to {}", node.k, node.reader));
        }
        let got: Vec<_> = writer_steps(&exec.trace)
            .into_iter()
            .filter(|s| matches!(s.kind, StepKind::Read | StepKind::Write))
            .map(|s| (s.kind, s.reg))
            .collect();
        let want: Vec<_> =
            self.solo.steps[1..=node.k.min(self.solo.m()) as usize].iter().map(|s| (s.kind, s.reg.clone())).collect();
        if got != want {
            return Err(format!(
                "writer steps diverge from the solo write: {} taken, {} expected",
                got.len(),
                want.len()
            ));
        }
        Ok(())
    }

    fn start(&mut self) -> Found {
        let k = self.solo.m() + 1;
        for x in self.readers() {
            for m in self.readers().into_iter().filter(|&m| m != x) {
                let stage = self.stage(StageLabel::A, k, m, x, None);
                let plan = Plan { writer: WriterPart::Complete, parts: vec![Part::Read(x)] };
                let exec = match self.exec(&stage, plan) {
                    Ok(e) => e,
                    Err(Found::Dead) => continue,
                    Err(f) => return f,
                };
                if let Some(f) = self.settle(&stage, &exec) {
                    match f {
                        Found::Dead => continue,
                        f => return f,
                    }
                }
                let node = Node { k, malicious: m, reader: x, replay: Vec::new() };
                if let Err(reason) = self.sound(&node, &exec) {
                    self.fail(&stage, reason);
                    continue;
                }
                if let Found::Outcome(o) = self.descend(node) {
                    return Found::Outcome(o);
                }
            }
        }
        Found::Dead
    }

    /// Runs a plan whose designated read must match an earlier one; a
    /// mismatch kills the branch.
    fn replayed(&mut self, stage: TransformationStage, plan: Plan, next: &Node) -> Result<Execution, Found> {
        let exec = self.exec(&stage, plan)?;
        if let Some(f) = self.settle(&stage, &exec) {
            return Err(f);
        }
        if let Err(reason) = self.sound(next, &exec) {
            self.fail(&stage, reason);
            return Err(Found::Dead);
        }
        Ok(exec)
    }

    fn descend(&mut self, node: Node) -> Found {
        let Node { k, malicious: p, reader: q, .. } = node.clone();
        if k == 0 {
            return self.silent(&node);
        }
        let prev = k - 1;
        let inv = self.invisible(prev);
        let wp = self.writer_part(prev);

        // Case 1: s^{k-1} is invisible to q as well.
        if inv.contains(&q) {
            let next = Node { k: prev, ..node.clone() };
            let plan = Plan { writer: wp, parts: vec![Part::Replay(p, node.replay.clone()), Part::Read(q)] };
            match self.replayed(self.stage(StageLabel::B, prev, p, q, None), plan, &next) {
                Ok(_) => {
                    if let f @ Found::Outcome(_) = self.descend(next) {
                        return f;
                    }
                }
                Err(f @ Found::Outcome(_)) => return f,
                Err(Found::Dead) => {}
            }
        }
        let z = self.z(&[p, q]);
        for r in z {
            let to_r = inv.contains(&r);
            let to_p = inv.contains(&p);
            if !to_r && !to_p {
                continue;
            }
            match self.case2(&node, r, wp, to_r, to_p) {
                f @ Found::Outcome(_) => return f,
                Found::Dead => {}
            }
        }
        Found::Dead
    }

    fn case2(&mut self, node: &Node, r: ProcessId, wp: WriterPart, to_r: bool, to_p: bool) -> Found {
        let (p, q, prev) = (node.malicious, node.reader, node.k - 1);
        macro_rules! attempt {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(f) => return f,
                }
            };
        }
        // C: p replays, q reads, p resets its registers, r reads.
        let stage = self.stage(StageLabel::C, prev, p, q, Some(r));
        let plan = Plan {
            writer: wp,
            parts: vec![Part::Replay(p, node.replay.clone()), Part::Read(q), Part::Reset(p), Part::Read(r)],
        };
        let c = attempt!(self.exec(&stage, plan));
        if let Some(f) = self.settle(&stage, &c) {
            return f;
        }
        let wq = c.actions_of(q);

        // D: p takes no steps; q replays its accesses from C; r reads.
        let stage = self.stage(StageLabel::D, prev, q, r, Some(r));
        let plan = Plan { writer: wp, parts: vec![Part::Replay(q, wq.clone()), Part::Read(r)] };
        let d = attempt!(self.exec(&stage, plan));
        if let Some(f) = self.settle(&stage, &d) {
            return f;
        }
        if to_r {
            let next = Node { k: prev, malicious: q, reader: r, replay: wq.clone() };
            match self.sound(&next, &d) {
                Ok(()) => {
                    if let f @ Found::Outcome(_) = self.descend(next) {
                        return f;
                    }
                }
                Err(reason) => self.fail(&stage, reason),
            }
        }
        if !to_p {
            return Found::Dead;
        }

        // E: D, then q resets its registers and p reads.
        let stage = self.stage(StageLabel::E, prev, q, p, Some(r));
        let plan = Plan { writer: wp, parts: vec![Part::Replay(q, wq), Part::Read(r), Part::Reset(q), Part::Read(p)] };
        let e = attempt!(self.exec(&stage, plan));
        if let Some(f) = self.settle(&stage, &e) {
            return f;
        }
        let wr = e.actions_of(r);

        // F: q takes no steps; r replays its accesses from E; p reads.
        let next = Node { k: prev, malicious: r, reader: p, replay: wr.clone() };
        let plan = Plan { writer: wp, parts: vec![Part::Replay(r, wr), Part::Read(p)] };
        attempt!(self.replayed(self.stage(StageLabel::F, prev, r, p, Some(r)), plan, &next));
        self.descend(next)
    }

    /// The writer never invokes; the malicious process replays and the
    /// reader reads. A marker return is a violation witness.
    fn silent(&mut self, node: &Node) -> Found {
        let stage = self.stage(StageLabel::A0Silent, 0, node.malicious, node.reader, None);
        let plan = Plan {
            writer: WriterPart::Idle,
            parts: vec![Part::Replay(node.malicious, node.replay.clone()), Part::Read(node.reader)],
        };
        let exec = match self.exec(&stage, plan) {
            Ok(e) => e,
            Err(f) => return f,
        };
        match exec.read(node.reader).clone() {
            ReadResult::Marker => {
                let zero = exec.trace.register_steps(ProcessId::WRITER) == 0;
                match self.violated(&exec) {
                    Some((class, explanation)) if zero => {
                        self.log.push(StageRecord { stage: stage.clone(), result: StageResult::ReadMarker });
                        Found::Outcome(Box::new(AttackOutcome::ViolationWitness(Witness {
                            stage,
                            class,
                            explanation,
                            trace: exec.trace,
                        })))
                    }
                    _ => {
                        self.fail(&stage, "marker read is not flagged by the checker".to_owned());
                        Found::Dead
                    }
                }
            }
            other => {
                // Without a write in the history the read may legally block or return u0.
                if let Some(f) = self.settle(&stage, &exec) {
                    if let f @ Found::Outcome(_) = f {
                        return f;
                    }
                } else {
                    self.fail(&stage, format!("unexpected read result {other:?}"));
                }
                Found::Dead
            }
        }
    }
}
