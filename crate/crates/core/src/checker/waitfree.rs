use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{CheckError, Verdict, ViolationClass};
use crate::model::{FaultModel, ProcessId};
use crate::sim::Scenario;
use crate::trace::{Event, EventKind, OpStatus, Outcome, RunStatus, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub step_budget: u64,
    pub per_op_budget: u64,
}

impl Budgets {
    pub fn of(s: &Scenario) -> Budgets {
        Budgets { step_budget: s.step_budget, per_op_budget: s.per_op_budget }
    }
}

/// Top-level invocations that never got a response, keyed by invoke step.
fn pending_top_level(events: &[Event]) -> Vec<&Event> {
    let mut open: HashMap<(ProcessId, u32), &Event> = HashMap::new();
    for e in events.iter().filter(|e| e.reg.is_none()) {
        match e.kind {
            EventKind::Invoke => {
                open.insert((e.proc, e.thread), e);
            }
            EventKind::Respond => {
                open.remove(&(e.proc, e.thread));
            }
            _ => {}
        }
    }
    let mut v: Vec<&Event> = open.into_values().collect();
    v.sort_by_key(|e| e.step);
    v
}

fn crashed(events: &[Event]) -> BTreeSet<ProcessId> {
    events.iter().filter(|e| e.kind == EventKind::Crash).map(|e| e.proc).collect()
}

/// Operations of correct processes must finish whenever the writer is correct
/// or no reader is malicious. Runs outside that condition may leave
/// operations pending; that is reported as a pass outside the guarantee.
pub fn check_wait_freedom(
    trace: &Trace,
    faults: &BTreeMap<ProcessId, FaultModel>,
    budgets: Budgets,
) -> Result<Verdict, CheckError> {
    let class = ViolationClass::WaitFreedom;
    let down = crashed(&trace.events);
    let malicious = |p: &ProcessId| faults.get(p).is_some_and(FaultModel::is_malicious);
    let correct = |p: &ProcessId| !malicious(p) && !down.contains(p);
    let pending: Vec<&Event> = pending_top_level(&trace.events).into_iter().filter(|e| correct(&e.proc)).collect();
    if pending.is_empty() {
        return Ok(Verdict::pass(class, "every operation of a correct process completed"));
    }
    if !trace.outcome.fair {
        return Err(CheckError::UnfairSchedule { pending: pending.len() });
    }
    let writer_correct = correct(&ProcessId::WRITER);
    let reader_malicious = faults.iter().any(|(p, f)| *p != ProcessId::WRITER && f.is_malicious());
    let witnesses: Vec<u64> = pending.iter().map(|e| e.step).collect();
    let who: Vec<String> = pending.iter().map(|e| format!("{}@{}", e.proc, e.step)).collect();
    let detail = format!(
        "{} operation(s) pending at step budget {} / per-op budget {} under a fair schedule: {}",
        pending.len(),
        budgets.step_budget,
        budgets.per_op_budget,
        who.join(", ")
    );
    if writer_correct || !reader_malicious {
        Ok(Verdict::violation(class, witnesses, detail))
    } else {
        let mut v = Verdict::pass(class, format!("pending outside guarantee: {detail}"));
        v.witnesses = witnesses;
        v.outside_guarantee = true;
        Ok(v)
    }
}

/// Rebuilds run metadata for a trace loaded from disk.
pub fn infer_outcome(events: &[Event], scenario: &Scenario) -> Outcome {
    let down = crashed(events);
    let mut per_proc: HashMap<ProcessId, Vec<(u64, bool)>> = HashMap::new();
    let mut open: HashMap<(ProcessId, u32), (ProcessId, usize)> = HashMap::new();
    for e in events.iter().filter(|e| e.reg.is_none()) {
        match e.kind {
            EventKind::Invoke => {
                let list = per_proc.entry(e.proc).or_default();
                open.insert((e.proc, e.thread), (e.proc, list.len()));
                list.push((e.step, false));
            }
            EventKind::Respond => {
                if let Some((p, i)) = open.remove(&(e.proc, e.thread)) {
                    per_proc.get_mut(&p).expect("opened above")[i].1 = true;
                }
            }
            _ => {}
        }
    }
    let mut seen: HashMap<ProcessId, usize> = HashMap::new();
    let ops: Vec<OpStatus> = scenario
        .workload
        .iter()
        .map(|item| {
            let i = seen.entry(item.proc).or_default();
            let rec = per_proc.get(&item.proc).and_then(|l| l.get(*i)).copied();
            *i += 1;
            match rec {
                Some((_, true)) => OpStatus::Completed,
                _ if down.contains(&item.proc) => OpStatus::CrashedOwner,
                Some((_, false)) => OpStatus::Pending,
                None => OpStatus::NotInvoked,
            }
        })
        .collect();
    let status = if ops.iter().all(|s| matches!(s, OpStatus::Completed | OpStatus::CrashedOwner)) {
        RunStatus::Quiescent
    } else {
        RunStatus::BudgetExhausted
    };
    let clock = events.last().map_or(0, |e| e.step + 1);
    Outcome { status, fair: scenario.schedule.is_fair(), clock, ops }
}
