use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructions::InstanceInfo;
use crate::model::{FaultModel, ProcessId, RegId, Value};
use crate::trace::{Event, EventKind, OpKind, ReadReturn};

/// Which write a read's result corresponds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadIndex {
    /// The k-th write (0 is the initial value).
    Index(u64),
    /// A value no write in the history produced.
    Unknown,
    Bottom,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpRecordKind {
    Write {
        k: u64,
        u: Value,
    },
    /// `idx` and `ret` are `None` while the read is pending.
    Read {
        ret: Option<ReadReturn>,
        idx: Option<ReadIndex>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub proc: ProcessId,
    pub kind: OpRecordKind,
    pub invoke_step: u64,
    pub respond_step: Option<u64>,
    pub honest: bool,
}

impl OpRecord {
    pub fn is_write(&self) -> bool {
        matches!(self.kind, OpRecordKind::Write { .. })
    }

    pub fn completed(&self) -> bool {
        self.respond_step.is_some()
    }

    /// `self` responds before `other` is invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.respond_step.is_some_and(|r| r < other.invoke_step)
    }

    pub fn overlaps(&self, other: &OpRecord) -> bool {
        !self.precedes(other) && !other.precedes(self)
    }

    pub fn read_index(&self) -> Option<ReadIndex> {
        match &self.kind {
            OpRecordKind::Read { idx, .. } => *idx,
            OpRecordKind::Write { .. } => None,
        }
    }

    pub fn write_k(&self) -> Option<u64> {
        match &self.kind {
            OpRecordKind::Write { k, .. } => Some(*k),
            OpRecordKind::Read { .. } => None,
        }
    }

    /// The invoke and (if any) respond steps.
    pub fn steps(&self) -> Vec<u64> {
        std::iter::once(self.invoke_step).chain(self.respond_step).collect()
    }
}

/// Operations on one implemented register.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub ops: Vec<OpRecord>,
    pub writer: ProcessId,
    pub writer_honest: bool,
    pub u0: Value,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("response at step {step} by {proc} has no matching invocation")]
    MalformedHistory { step: u64, proc: ProcessId },
}

impl History {
    pub fn writes(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.is_write())
    }

    pub fn reads(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| !o.is_write())
    }

    /// Keeps only the operations invoked at one of `steps`; a kept operation
    /// whose response is not listed becomes pending.
    pub fn restrict(&self, steps: &[u64]) -> History {
        let ops = self
            .ops
            .iter()
            .filter(|o| steps.contains(&o.invoke_step))
            .map(|o| {
                let mut o = o.clone();
                if o.respond_step.is_some_and(|r| !steps.contains(&r)) {
                    o.respond_step = None;
                    if let OpRecordKind::Read { ret, idx } = &mut o.kind {
                        *ret = None;
                        *idx = None;
                    }
                }
                o
            })
            .collect();
        History { ops, writer: self.writer, writer_honest: self.writer_honest, u0: self.u0.clone() }
    }

    /// Extracts the history of `inst` from a trace.
    pub fn from_events(
        events: &[Event],
        inst: &InstanceInfo,
        faults: &BTreeMap<ProcessId, FaultModel>,
    ) -> Result<History, HistoryError> {
        let honest = |p: ProcessId| !faults.get(&p).is_some_and(|f| f.is_malicious());
        let key: Option<&RegId> = inst.key.as_ref();
        let mut open: HashMap<(ProcessId, u32), usize> = HashMap::new();
        let mut ops: Vec<OpRecord> = Vec::new();
        let mut raw_rets: Vec<Option<ReadReturn>> = Vec::new();
        let mut writes = 0u64;
        for e in events {
            if e.reg.as_ref() != key || !matches!(e.kind, EventKind::Invoke | EventKind::Respond) {
                continue;
            }
            match e.kind {
                EventKind::Invoke => {
                    let kind = match e.op {
                        Some(OpKind::Write) => {
                            writes += 1;
                            OpRecordKind::Write { k: writes, u: e.arg.clone().unwrap_or_default() }
                        }
                        _ => OpRecordKind::Read { ret: None, idx: None },
                    };
                    open.insert((e.proc, e.thread), ops.len());
                    ops.push(OpRecord {
                        proc: e.proc,
                        kind,
                        invoke_step: e.step,
                        respond_step: None,
                        honest: honest(e.proc),
                    });
                    raw_rets.push(None);
                }
                _ => {
                    let i = open
                        .remove(&(e.proc, e.thread))
                        .ok_or(HistoryError::MalformedHistory { step: e.step, proc: e.proc })?;
                    ops[i].respond_step = Some(e.step);
                    raw_rets[i] = e.ret.clone();
                }
            }
        }
        let wvals: Vec<Value> = ops
            .iter()
            .filter_map(|o| match &o.kind {
                OpRecordKind::Write { u, .. } => Some(u.clone()),
                _ => None,
            })
            .collect();
        for (o, ret) in ops.iter_mut().zip(raw_rets) {
            if let OpRecordKind::Read { ret: r, idx } = &mut o.kind {
                if o.respond_step.is_some() {
                    let ret = ret.unwrap_or(ReadReturn::Bottom);
                    *idx = Some(index_of(&ret, &inst.u0, &wvals));
                    *r = Some(ret);
                }
            }
        }
        Ok(History { ops, writer: inst.writer, writer_honest: honest(inst.writer), u0: inst.u0.clone() })
    }
}

/// Maps a returned value to the write that produced it. Tuples carry their
/// index; bare values are located by position (payloads are unique).
pub fn index_of(ret: &ReadReturn, u0: &Value, writes: &[Value]) -> ReadIndex {
    match ret {
        ReadReturn::Bottom => ReadIndex::Bottom,
        ReadReturn::Tuple(t) => {
            let expected = if t.k == 0 { Some(u0) } else { writes.get(t.k as usize - 1) };
            match expected {
                Some(u) if *u == t.u => ReadIndex::Index(t.k),
                _ => ReadIndex::Unknown,
            }
        }
        ReadReturn::Value { u } => {
            if u == u0 {
                ReadIndex::Index(0)
            } else {
                match writes.iter().position(|w| w == u) {
                    Some(i) => ReadIndex::Index(i as u64 + 1),
                    None => ReadIndex::Unknown,
                }
            }
        }
    }
}
