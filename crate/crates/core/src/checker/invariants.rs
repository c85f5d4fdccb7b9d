use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Verdict, ViolationClass};
use crate::constructions::{InstanceInfo, InstanceKind, Layout, SlotRef};
use crate::model::{CellValue, FaultModel, ProcessId, RegId, SeqTuple, Signature, Token, Value};
use crate::trace::{Event, EventKind, OpKind, ReadReturn, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantRule {
    /// Only a register's writer writes it.
    SingleWriter,
    /// Every access is by the register's writer or one of its readers.
    AccessClosure,
    /// Each base-register read returns the last value written (or the initial one).
    Atomicity,
    /// Signed values are written only by processes that observed them.
    Unforgeability,
    /// The writer stores commit/prepare cells whose tuples it was asked to write.
    WriterCellForm,
    /// The writer's cells in each register advance strictly.
    WriterMonotone,
    /// An honest read returns a tuple from the first writer cell it observes.
    ReadReturnForm,
    RpqMonotone,
    RqqMonotone,
    /// A read won by asking peers has told every peer before returning.
    BroadcastBeforeReturn,
    /// Honest processes only pass on tuples validly signed by the writer.
    SignatureValidity,
    /// An honest signed read returns the freshest valid tuple it saw.
    SignedReadMax,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub rule: InvariantRule,
    pub instance: Option<RegId>,
    pub witnesses: Vec<u64>,
    pub explanation: String,
}

pub fn validate_internal_invariants(
    trace: &Trace,
    layout: &Layout,
    faults: &BTreeMap<ProcessId, FaultModel>,
) -> Verdict {
    let found = invariant_violations(&trace.events, layout, faults);
    let class = ViolationClass::InternalInvariant;
    match found.first() {
        None => Verdict::pass(class, "all internal invariants hold"),
        Some(v) => {
            let more = if found.len() > 1 { format!(" (+{} more)", found.len() - 1) } else { String::new() };
            let inst = v.instance.as_ref().map_or("top level".to_owned(), |k| k.to_string());
            Verdict::violation(class, v.witnesses.clone(), format!("{:?} in {inst}: {}{more}", v.rule, v.explanation))
        }
    }
}

/// Every invariant violation in the trace: substrate rules first, then the
/// per-instance construction rules.
pub fn invariant_violations(
    events: &[Event],
    layout: &Layout,
    faults: &BTreeMap<ProcessId, FaultModel>,
) -> Vec<InvariantViolation> {
    let mut out = check_substrate(events, layout);
    let cx = Cx::new(events, layout, faults);
    for inst in &layout.instances {
        cx.instance(inst, &mut out);
    }
    out
}

fn violation(
    rule: InvariantRule,
    instance: Option<&RegId>,
    witnesses: Vec<u64>,
    explanation: String,
) -> InvariantViolation {
    InvariantViolation { rule, instance: instance.cloned(), witnesses, explanation }
}

/// Base-register rules: single writer, access closure, atomicity and
/// unforgeability of signed values.
pub fn check_substrate(events: &[Event], layout: &Layout) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    let mut current: HashMap<&RegId, &CellValue> = layout.registers.iter().map(|r| (&r.id, &r.initial)).collect();
    let mut public: HashSet<Token> = HashSet::new();
    for r in &layout.registers {
        public.extend(tokens_of(&r.initial));
    }
    let mut seen: HashMap<ProcessId, HashSet<Token>> = HashMap::new();
    for e in events {
        let (Some(reg), Some(value)) = (&e.reg, &e.value) else {
            if e.kind == EventKind::Sign {
                if let Some(v) = &e.value {
                    seen.entry(e.proc).or_default().extend(tokens_of(v));
                }
            }
            continue;
        };
        if !e.is_register_step() {
            continue;
        }
        let Some(spec) = layout.spec(reg) else {
            out.push(violation(
                InvariantRule::AccessClosure,
                None,
                vec![e.step],
                format!("{} accessed undeclared register {reg}", e.proc),
            ));
            continue;
        };
        match e.kind {
            EventKind::RegWrite => {
                if spec.writer != e.proc {
                    out.push(violation(
                        InvariantRule::SingleWriter,
                        None,
                        vec![e.step],
                        format!("{} wrote {reg}, owned by {}", e.proc, spec.writer),
                    ));
                }
                let toks = tokens_of(value);
                let mine = seen.entry(e.proc).or_default();
                if let Some(t) = toks.iter().find(|t| !public.contains(t) && !mine.contains(t)) {
                    out.push(violation(
                        InvariantRule::Unforgeability,
                        None,
                        vec![e.step],
                        format!("{} wrote signature token {} it never observed", e.proc, t.0),
                    ));
                }
                current.insert(&spec.id, value);
            }
            _ => {
                if !spec.readable_by(e.proc) {
                    out.push(violation(
                        InvariantRule::AccessClosure,
                        None,
                        vec![e.step],
                        format!("{} read {reg} without being one of its readers", e.proc),
                    ));
                }
                if current.get(&spec.id).is_some_and(|v| *v != value) {
                    out.push(violation(
                        InvariantRule::Atomicity,
                        None,
                        vec![e.step],
                        format!("read of {reg} by {} does not return the last value written", e.proc),
                    ));
                }
                seen.entry(e.proc).or_default().extend(tokens_of(value));
            }
        }
    }
    out
}

fn tokens_of(c: &CellValue) -> Vec<Token> {
    let mut v = Vec::new();
    c.tokens(&mut v);
    v
}

fn as_cell(v: &Value) -> CellValue {
    match v {
        Value::Cell(c) => (**c).clone(),
        Value::Bytes(b) => CellValue::Garbage { bytes: b.clone() },
    }
}

fn ret_cell(r: &Option<ReadReturn>) -> CellValue {
    match r.as_ref().and_then(ReadReturn::value) {
        Some(v) => as_cell(v),
        None => CellValue::Bottom,
    }
}

/// One completed or pending operation on an instance.
struct Op<'a> {
    invoke: &'a Event,
    respond: Option<&'a Event>,
}

struct Cx<'a> {
    events: &'a [Event],
    faults: &'a BTreeMap<ProcessId, FaultModel>,
    /// Signatures issued to each token, including setup-time ones.
    issued: HashMap<Token, (SeqTuple, ProcessId)>,
}

impl<'a> Cx<'a> {
    fn new(events: &'a [Event], layout: &Layout, faults: &'a BTreeMap<ProcessId, FaultModel>) -> Cx<'a> {
        let mut issued = HashMap::new();
        let mut add = |c: &CellValue| {
            if let CellValue::Signed(s) = c {
                issued.entry(s.token).or_insert((s.tuple.clone(), s.signer));
            }
        };
        for r in &layout.registers {
            add(&r.initial);
        }
        for e in events.iter().filter(|e| e.kind == EventKind::Sign) {
            if let Some(v) = &e.value {
                add(v);
            }
        }
        Cx { events, faults, issued }
    }

    fn honest(&self, p: ProcessId) -> bool {
        !self.faults.get(&p).is_some_and(FaultModel::is_malicious)
    }

    fn valid(&self, s: &Signature, signer: ProcessId) -> bool {
        s.signer == signer && self.issued.get(&s.token).is_some_and(|(t, p)| *t == s.tuple && *p == signer)
    }

    fn at(&self, step: u64) -> Option<&'a Event> {
        let i = self.events.partition_point(|e| e.step < step);
        self.events.get(i).filter(|e| e.step == step)
    }

    fn ops(&self, key: Option<&RegId>) -> Vec<Op<'a>> {
        let mut open: HashMap<(ProcessId, u32), usize> = HashMap::new();
        let mut ops: Vec<Op<'a>> = Vec::new();
        for e in self.events.iter().filter(|e| e.reg.as_ref() == key) {
            match e.kind {
                EventKind::Invoke => {
                    open.insert((e.proc, e.thread), ops.len());
                    ops.push(Op { invoke: e, respond: None });
                }
                EventKind::Respond => {
                    if let Some(i) = open.remove(&(e.proc, e.thread)) {
                        ops[i].respond = Some(e);
                    }
                }
                _ => {}
            }
        }
        ops
    }

    /// Cells `p` stored into a slot, with their steps.
    fn writes_to(&self, slot: &SlotRef, p: ProcessId) -> Vec<(u64, CellValue)> {
        self.events
            .iter()
            .filter(|e| e.proc == p)
            .filter_map(|e| match (slot, e.kind) {
                (SlotRef::Atomic(id), EventKind::RegWrite) if e.reg.as_ref() == Some(id) => {
                    Some((e.step, e.value.clone().unwrap_or(CellValue::Bottom)))
                }
                (SlotRef::Nested(key), EventKind::Invoke)
                    if e.reg.as_ref() == Some(key) && e.op == Some(OpKind::Write) =>
                {
                    Some((e.step, e.arg.as_ref().map_or(CellValue::Bottom, as_cell)))
                }
                _ => None,
            })
            .collect()
    }

    /// The first cell `op`'s own thread observed in `slot` during the operation.
    fn first_observation(&self, slot: &SlotRef, op: &Op) -> Option<(u64, CellValue)> {
        let (lo, hi) = (op.invoke.step, op.respond.map_or(u64::MAX, |r| r.step));
        let (p, t) = (op.invoke.proc, op.invoke.thread);
        self.events.iter().filter(|e| e.step > lo && e.step < hi && e.proc == p && e.thread == t).find_map(|e| {
            match (slot, e.kind) {
                (SlotRef::Atomic(id), EventKind::RegRead) if e.reg.as_ref() == Some(id) => {
                    Some((e.step, e.value.clone().unwrap_or(CellValue::Bottom)))
                }
                (SlotRef::Nested(key), EventKind::Respond) if e.reg.as_ref() == Some(key) => {
                    Some((e.step, ret_cell(&e.ret)))
                }
                _ => None,
            }
        })
    }

    fn instance(&self, inst: &InstanceInfo, out: &mut Vec<InvariantViolation>) {
        let key = inst.key.as_ref();
        let ops = self.ops(key);
        // v[k] is the tuple of the k-th write; v[0] the initial one.
        let mut v = vec![SeqTuple::initial(&inst.u0)];
        let mut write_invokes = vec![0u64];
        for o in ops.iter().filter(|o| o.invoke.op == Some(OpKind::Write)) {
            v.push(SeqTuple::new(v.len() as u64, o.invoke.arg.clone().unwrap_or_default()));
            write_invokes.push(o.invoke.step);
        }
        let writer_honest = self.honest(inst.writer);
        match &inst.kind {
            InstanceKind::Algo1 { p, q, rwp, rwq, rpq, rqq } => {
                if writer_honest {
                    self.writer_cells(inst, &SlotRef::Atomic(rwp.clone()), &v, out);
                    self.writer_cells(inst, rwq, &v, out);
                }
                if self.honest(*p) {
                    self.plain_monotone(inst, InvariantRule::RpqMonotone, rpq, *p, out);
                }
                if writer_honest {
                    for &qi in q.iter().filter(|&&qi| self.honest(qi)) {
                        for (_, _, id) in rqq.iter().filter(|(a, _, _)| *a == qi) {
                            self.plain_monotone(
                                inst,
                                InvariantRule::RqqMonotone,
                                &SlotRef::Atomic(id.clone()),
                                qi,
                                out,
                            );
                        }
                    }
                }
                let mine = |r: ProcessId| if r == *p { SlotRef::Atomic(rwp.clone()) } else { rwq.clone() };
                self.read_forms(inst, &ops, &v, &write_invokes, mine, out);
                self.broadcasts(inst, &ops, q, rqq, out);
            }
            InstanceKind::Algo2 { p, rwp, rwq, rpq, .. } => {
                if writer_honest {
                    self.writer_cells(inst, &SlotRef::Atomic(rwp.clone()), &v, out);
                    self.writer_cells(inst, &SlotRef::Atomic(rwq.clone()), &v, out);
                    if self.honest(*p) {
                        self.plain_monotone(inst, InvariantRule::RpqMonotone, &SlotRef::Atomic(rpq.clone()), *p, out);
                    }
                }
                let mine = |r: ProcessId| SlotRef::Atomic(if r == *p { rwp.clone() } else { rwq.clone() });
                self.read_forms(inst, &ops, &v, &write_invokes, mine, out);
            }
            InstanceKind::Algo3 { regs } => self.signed(inst, &ops, &v, regs, out),
            InstanceKind::Opaque => {}
        }
    }

    fn writer_cells(&self, inst: &InstanceInfo, slot: &SlotRef, v: &[SeqTuple], out: &mut Vec<InvariantViolation>) {
        let key = inst.key.as_ref();
        let known = |t: &SeqTuple| v.get(t.k as usize) == Some(t);
        let mut last: Option<(u64, u64)> = None;
        for (step, cell) in self.writes_to(slot, inst.writer) {
            let pos = match &cell {
                CellValue::Commit(t) if t.k >= 1 && known(t) => Some(2 * t.k),
                CellValue::Prepare { prev, next } if next.k == prev.k + 1 && known(prev) && known(next) => {
                    Some(2 * next.k - 1)
                }
                _ => None,
            };
            let Some(pos) = pos else {
                out.push(violation(
                    InvariantRule::WriterCellForm,
                    key,
                    vec![step],
                    format!("writer stored {cell:?} in {slot:?}, which is not a commit or prepare of its own writes"),
                ));
                continue;
            };
            if let Some((ls, lp)) = last {
                if pos <= lp {
                    out.push(violation(
                        InvariantRule::WriterMonotone,
                        key,
                        vec![ls, step],
                        format!("writer's cell at step {step} in {slot:?} does not advance past the one at step {ls}"),
                    ));
                }
            }
            last = Some((step, pos));
        }
    }

    fn plain_monotone(
        &self,
        inst: &InstanceInfo,
        rule: InvariantRule,
        slot: &SlotRef,
        p: ProcessId,
        out: &mut Vec<InvariantViolation>,
    ) {
        let mut last: Option<(u64, u64)> = None;
        for (step, cell) in self.writes_to(slot, p) {
            let CellValue::Plain(t) = cell else {
                out.push(violation(
                    rule,
                    inst.key.as_ref(),
                    vec![step],
                    format!("{p} stored a non-tuple cell in {slot:?}"),
                ));
                continue;
            };
            if let Some((ls, lk)) = last {
                if t.k < lk {
                    out.push(violation(
                        rule,
                        inst.key.as_ref(),
                        vec![ls, step],
                        format!("{p} wrote index {} into {slot:?} after index {lk}", t.k),
                    ));
                }
            }
            last = Some((step, t.k));
        }
    }

    fn read_forms(
        &self,
        inst: &InstanceInfo,
        ops: &[Op],
        v: &[SeqTuple],
        write_invokes: &[u64],
        slot_of: impl Fn(ProcessId) -> SlotRef,
        out: &mut Vec<InvariantViolation>,
    ) {
        if !self.honest(inst.writer) {
            return;
        }
        let key = inst.key.as_ref();
        for op in ops.iter().filter(|o| o.invoke.op == Some(OpKind::Read) && self.honest(o.invoke.proc)) {
            let Some(resp) = op.respond else { continue };
            let mut wit = vec![op.invoke.step, resp.step];
            let ret = resp.ret.as_ref().and_then(ReadReturn::tuple);
            let Some(ret) = ret.filter(|t| v.get(t.k as usize) == Some(*t)) else {
                out.push(violation(
                    InvariantRule::ReadReturnForm,
                    key,
                    wit,
                    format!("read returned {:?}, not a written tuple", resp.ret),
                ));
                continue;
            };
            if write_invokes[ret.k as usize] > resp.step {
                out.push(violation(
                    InvariantRule::ReadReturnForm,
                    key,
                    wit,
                    format!("read returned index {} before it was written", ret.k),
                ));
                continue;
            }
            let slot = slot_of(op.invoke.proc);
            let ok = match self.first_observation(&slot, op) {
                Some((s, c)) => {
                    wit.push(s);
                    match c {
                        CellValue::Commit(t) => t == *ret,
                        CellValue::Prepare { prev, next } => prev == *ret || next == *ret,
                        _ => false,
                    }
                }
                None => false,
            };
            if !ok {
                out.push(violation(
                    InvariantRule::ReadReturnForm,
                    key,
                    wit,
                    format!("read returned index {} which the first cell it saw in {slot:?} does not carry", ret.k),
                ));
            }
        }
    }

    fn broadcasts(
        &self,
        inst: &InstanceInfo,
        ops: &[Op],
        q: &[ProcessId],
        rqq: &[(ProcessId, ProcessId, RegId)],
        out: &mut Vec<InvariantViolation>,
    ) {
        for op in ops.iter().filter(|o| o.invoke.op == Some(OpKind::Read)) {
            let me = op.invoke.proc;
            let Some(resp) = op.respond else { continue };
            if !q.contains(&me) || !self.honest(me) {
                continue;
            }
            let mine: Vec<&RegId> = rqq.iter().filter(|(a, _, _)| *a == me).map(|(_, _, id)| id).collect();
            let Some(prev) = resp.step.checked_sub(1).and_then(|s| self.at(s)) else { continue };
            let won_by_asking = prev.proc == me
                && prev.kind == EventKind::RegWrite
                && prev.reg.as_ref().is_some_and(|r| mine.contains(&r));
            if !won_by_asking {
                continue;
            }
            let Some(ret) = resp.ret.as_ref().and_then(ReadReturn::tuple) else { continue };
            let told = |id: &RegId| {
                self.events.iter().any(|e| {
                    e.step > op.invoke.step
                        && e.step < resp.step
                        && e.proc == me
                        && e.kind == EventKind::RegWrite
                        && e.reg.as_ref() == Some(id)
                        && e.value == Some(CellValue::Plain(ret.clone()))
                })
            };
            if let Some(missed) = mine.iter().find(|id| !told(id)) {
                out.push(violation(
                    InvariantRule::BroadcastBeforeReturn,
                    inst.key.as_ref(),
                    vec![op.invoke.step, resp.step],
                    format!("{me} returned index {} without writing it to {missed}", ret.k),
                ));
            }
        }
    }

    fn signed(
        &self,
        inst: &InstanceInfo,
        ops: &[Op],
        v: &[SeqTuple],
        regs: &[(ProcessId, ProcessId, RegId)],
        out: &mut Vec<InvariantViolation>,
    ) {
        let w = inst.writer;
        let key = inst.key.as_ref();
        let owner: HashMap<&RegId, ProcessId> = regs.iter().map(|(i, _, id)| (id, *i)).collect();
        for e in self.events.iter().filter(|e| e.kind == EventKind::RegWrite) {
            let Some(&i) = e.reg.as_ref().and_then(|r| owner.get(r)) else { continue };
            if !self.honest(i) {
                continue;
            }
            let ok = match &e.value {
                Some(CellValue::Signed(s)) => {
                    self.valid(s, w) && (i != w || v.get(s.tuple.k as usize) == Some(&s.tuple))
                }
                _ => false,
            };
            if !ok {
                out.push(violation(
                    InvariantRule::SignatureValidity,
                    key,
                    vec![e.step],
                    format!("{i} wrote {:?}, which is not a tuple validly signed by the writer", e.value),
                ));
            }
        }
        for op in ops.iter().filter(|o| o.invoke.op == Some(OpKind::Read) && self.honest(o.invoke.proc)) {
            let Some(resp) = op.respond else { continue };
            let p = op.invoke.proc;
            let mine: HashSet<&RegId> = regs.iter().filter(|(_, j, _)| *j == p).map(|(_, _, id)| id).collect();
            let mut best: Option<&Signature> = None;
            for e in self.events.iter().filter(|e| {
                e.step > op.invoke.step
                    && e.step < resp.step
                    && e.proc == p
                    && e.thread == op.invoke.thread
                    && e.kind == EventKind::RegRead
                    && e.reg.as_ref().is_some_and(|r| mine.contains(r))
            }) {
                if let Some(CellValue::Signed(s)) = &e.value {
                    if self.valid(s, w) && best.is_none_or(|b| s.tuple.k > b.tuple.k) {
                        best = Some(s);
                    }
                }
            }
            let expected = best.map_or(ReadReturn::Bottom, |s| ReadReturn::Tuple(s.tuple.clone()));
            if resp.ret.as_ref() != Some(&expected) {
                out.push(violation(
                    InvariantRule::SignedReadMax,
                    key,
                    vec![op.invoke.step, resp.step],
                    format!("{p} returned {:?}; the freshest valid tuple it read was {expected:?}", resp.ret),
                ));
            }
        }
    }
}
