//! Step-indexed event log shared by the simulator, checker and CLI.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::{CellValue, ProcessId, RegId, SeqTuple, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RegRead,
    RegWrite,
    Invoke,
    Respond,
    Crash,
    /// A signature issued by the oracle. Local to the signer; not a register step.
    Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Write,
    Read,
}

/// What a Read operation handed back to its caller.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "r", rename_all = "lowercase")]
pub enum ReadReturn {
    /// A sequence-numbered tuple, as returned by the constructions.
    Tuple(SeqTuple),
    /// A bare value, as returned by black-box candidates.
    Value {
        u: Value,
    },
    Bottom,
}

impl ReadReturn {
    pub fn value(&self) -> Option<&Value> {
        match self {
            ReadReturn::Tuple(t) => Some(&t.u),
            ReadReturn::Value { u } => Some(u),
            ReadReturn::Bottom => None,
        }
    }

    pub fn tuple(&self) -> Option<&SeqTuple> {
        match self {
            ReadReturn::Tuple(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, ReadReturn::Bottom)
    }
}

/// One trace record. Every key is always present; absent fields are `null`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub proc: ProcessId,
    pub thread: u32,
    pub kind: EventKind,
    pub reg: Option<RegId>,
    pub value: Option<CellValue>,
    pub op: Option<OpKind>,
    pub arg: Option<Value>,
    pub ret: Option<ReadReturn>,
}

impl Event {
    pub fn new(step: u64, proc: ProcessId, thread: u32, kind: EventKind) -> Event {
        Event { step, proc, thread, kind, reg: None, value: None, op: None, arg: None, ret: None }
    }

    pub fn is_register_step(&self) -> bool {
        matches!(self.kind, EventKind::RegRead | EventKind::RegWrite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every workload operation resolved.
    Quiescent,
    BudgetExhausted,
    /// A scripted schedule ran out of picks without a seeded continuation.
    ScriptEnded,
    /// Nothing runnable, yet some workload operation never resolved.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpStatus {
    Completed,
    Pending,
    CrashedOwner,
    NotInvoked,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: RunStatus,
    /// Whether the schedule that produced the trace is fair.
    pub fair: bool,
    /// Next unused step index when the run stopped.
    pub clock: u64,
    /// Final status of each workload item, by workload index.
    pub ops: Vec<OpStatus>,
}

/// A top-level operation as seen in a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopOp {
    pub proc: ProcessId,
    pub op: OpKind,
    pub invoke_step: u64,
    pub respond_step: Option<u64>,
    /// Register steps the process took while the operation was open.
    pub register_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<Event>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn register_steps(&self, proc: ProcessId) -> usize {
        self.events.iter().filter(|e| e.proc == proc && e.is_register_step()).count()
    }

    pub fn top_level_ops(&self) -> Vec<TopOp> {
        let mut ops: Vec<TopOp> = Vec::new();
        let mut open: std::collections::HashMap<ProcessId, usize> = Default::default();
        for e in &self.events {
            match e.kind {
                EventKind::Invoke if e.reg.is_none() => {
                    open.insert(e.proc, ops.len());
                    ops.push(TopOp {
                        proc: e.proc,
                        op: e.op.unwrap_or(OpKind::Read),
                        invoke_step: e.step,
                        respond_step: None,
                        register_steps: 0,
                    });
                }
                EventKind::Respond if e.reg.is_none() => {
                    if let Some(i) = open.remove(&e.proc) {
                        ops[i].respond_step = Some(e.step);
                    }
                }
                EventKind::RegRead | EventKind::RegWrite => {
                    if let Some(&i) = open.get(&e.proc) {
                        ops[i].register_steps += 1;
                    }
                }
                _ => {}
            }
        }
        ops
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> io::Result<()> {
        write_events(&self.events, w)
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

pub fn write_events<W: Write>(events: &[Event], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(r: R) -> io::Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|err| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}
