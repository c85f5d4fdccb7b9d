//! Deterministic scheduler. Every logical thread is a future that suspends
//! at each register access; the scheduler performs the access atomically,
//! logs it, and resumes the thread.

mod ctx;
mod schedule;

pub use ctx::{BoxFut, Ctx, ThreadKey};
pub use schedule::{Phase, Pick, PickError, Schedule, SeededPicker, Unit, FAIRNESS};

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::script;
use crate::constructions::{self, BuildError, Construction, Layout};
use crate::model::{FaultModel, ProcessId, Role, SeqTuple, Substrate, SubstrateError, Value};
use crate::trace::{Event, EventKind, OpKind, OpStatus, Outcome, ReadReturn, RunStatus, Trace};
use ctx::{Reply, Request, World};
use schedule::Picker;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
pub const DEFAULT_OP_BUDGET: u64 = 100_000;

fn default_step_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}

fn default_op_budget() -> u64 {
    DEFAULT_OP_BUDGET
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Operation {
    Write { value: Value },
    Read,
}

impl Operation {
    pub fn kind(&self) -> OpKind {
        match self {
            Operation::Write { .. } => OpKind::Write,
            Operation::Read => OpKind::Read,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadItem {
    pub proc: ProcessId,
    pub op: Operation,
    /// The operation is not invoked before this global step.
    #[serde(default)]
    pub start_step: Option<u64>,
    /// The operation is not invoked before workload item `after` has resolved.
    #[serde(default)]
    pub after: Option<usize>,
}

impl WorkloadItem {
    pub fn new(proc: ProcessId, op: Operation) -> WorkloadItem {
        WorkloadItem { proc, op, start_step: None, after: None }
    }

    pub fn write(value: &str) -> WorkloadItem {
        Self::new(ProcessId::WRITER, Operation::Write { value: Value::text(value) })
    }

    pub fn read(proc: u32) -> WorkloadItem {
        Self::new(ProcessId(proc), Operation::Read)
    }

    pub fn after(mut self, idx: usize) -> WorkloadItem {
        self.after = Some(idx);
        self
    }

    pub fn starting_at(mut self, step: u64) -> WorkloadItem {
        self.start_step = Some(step);
        self
    }
}

/// Full description of one experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub construction: String,
    pub n: u32,
    #[serde(default)]
    pub u0: Value,
    #[serde(default)]
    pub faults: BTreeMap<ProcessId, FaultModel>,
    #[serde(default)]
    pub workload: Vec<WorkloadItem>,
    pub schedule: Schedule,
    #[serde(default = "default_step_budget")]
    pub step_budget: u64,
    #[serde(default = "default_op_budget")]
    pub per_op_budget: u64,
}

impl Scenario {
    pub fn new(construction: &str, n: u32, seed: u64) -> Scenario {
        Scenario {
            construction: construction.to_owned(),
            n,
            u0: Value::empty(),
            faults: BTreeMap::new(),
            workload: Vec::new(),
            schedule: Schedule::Seeded { seed },
            step_budget: DEFAULT_STEP_BUDGET,
            per_op_budget: DEFAULT_OP_BUDGET,
        }
    }

    pub fn fault(&self, p: ProcessId) -> &FaultModel {
        static CORRECT: FaultModel = FaultModel::Correct;
        self.faults.get(&p).unwrap_or(&CORRECT)
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcessId> {
        (0..=self.n).map(ProcessId)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Malformed(m));
        if self.n < 2 {
            return bad(format!("n = {} but at least 2 readers are required", self.n));
        }
        for p in self.faults.keys() {
            if p.0 > self.n {
                return bad(format!("fault assigned to undeclared process {}", p.0));
            }
        }
        for (i, item) in self.workload.iter().enumerate() {
            if item.proc.0 > self.n {
                return bad(format!("workload item {i} names undeclared process {}", item.proc.0));
            }
            match (item.proc.role(), &item.op) {
                (Role::Writer, Operation::Read) => return bad(format!("workload item {i}: the writer cannot read")),
                (Role::Reader, Operation::Write { .. }) => {
                    return bad(format!("workload item {i}: reader {} cannot write", item.proc.0))
                }
                _ => {}
            }
            if self.fault(item.proc).is_malicious() {
                return bad(format!("workload item {i}: malicious process {} only runs its script", item.proc.0));
            }
            if let Some(a) = item.after {
                if a >= i {
                    return bad(format!("workload item {i} waits on item {a}, which is not earlier"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("process {proc}: {source}")]
    Substrate { proc: ProcessId, source: SubstrateError },
    #[error("scripted pick {0:?} is not runnable")]
    InvalidPick(Pick),
}

enum ThreadOut {
    Op(Option<ReadReturn>),
    Branch(Option<SeqTuple>),
    Script,
}

#[derive(Clone, Copy)]
enum SlotRole {
    Op(usize),
    Branch { join: usize, side: usize },
    Script,
}

struct Slot {
    fut: BoxFut<ThreadOut>,
    role: SlotRole,
}

struct ProcState {
    fault: FaultModel,
    crashed: bool,
    frozen: bool,
    busy: Option<usize>,
    queue: VecDeque<usize>,
    own_steps: u64,
}

struct OpState {
    status: OpStatus,
    frozen: bool,
    steps_at_invoke: u64,
}

/// A simulation in progress.
pub struct Sim {
    scenario: Scenario,
    world: Rc<RefCell<World>>,
    construction: Rc<dyn Construction>,
    layout: Layout,
    slots: BTreeMap<ThreadKey, Slot>,
    joins_by_parent: HashMap<ThreadKey, Vec<usize>>,
    doomed_blocks: HashMap<ThreadKey, Vec<usize>>,
    procs: BTreeMap<ProcessId, ProcState>,
    ops: Vec<OpState>,
    picker: Picker,
    stopped: Option<RunStatus>,
}

impl Sim {
    pub fn new(scenario: Scenario) -> Result<Sim, SimError> {
        scenario.validate()?;
        let mut sub = Substrate::new();
        let built = constructions::build(&scenario.construction, scenario.n, &scenario.u0, &mut sub)?;
        let world = Rc::new(RefCell::new(World::new(sub)));
        let mut procs = BTreeMap::new();
        for p in scenario.processes() {
            procs.insert(
                p,
                ProcState {
                    fault: scenario.fault(p).clone(),
                    crashed: false,
                    frozen: false,
                    busy: None,
                    queue: VecDeque::new(),
                    own_steps: 0,
                },
            );
        }
        for (i, item) in scenario.workload.iter().enumerate() {
            procs.get_mut(&item.proc).expect("validated").queue.push_back(i);
        }
        let ops = scenario
            .workload
            .iter()
            .map(|_| OpState { status: OpStatus::NotInvoked, frozen: false, steps_at_invoke: 0 })
            .collect();
        let picker = Picker::new(&scenario.schedule);
        let mut sim = Sim {
            scenario,
            world,
            construction: built.construction,
            layout: built.layout,
            slots: BTreeMap::new(),
            joins_by_parent: HashMap::new(),
            doomed_blocks: HashMap::new(),
            procs,
            ops,
            picker,
            stopped: None,
        };
        let scripts: Vec<_> = sim
            .procs
            .iter()
            .filter_map(|(p, st)| match &st.fault {
                FaultModel::Malicious { script } => Some((*p, script.clone())),
                _ => None,
            })
            .collect();
        for (p, s) in scripts {
            let key = sim.world.borrow_mut().fresh_thread(p);
            let ctx = Ctx::new(sim.world.clone(), key);
            let fut = script::run(s, ctx);
            sim.slots.insert(
                key,
                Slot {
                    fut: Box::pin(async move {
                        fut.await;
                        ThreadOut::Script
                    }),
                    role: SlotRole::Script,
                },
            );
            sim.poll_thread(key);
        }
        Ok(sim)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn clock(&self) -> u64 {
        self.world.borrow().sub.clock()
    }

    /// Makes `proc` crash before any step with index `at_step` or later.
    pub fn inject_crash(&mut self, proc: ProcessId, at_step: u64) {
        if let Some(st) = self.procs.get_mut(&proc) {
            if !st.crashed {
                st.fault = FaultModel::Crash { at_step };
            }
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.is_some()
    }

    /// Performs one scheduling decision. Returns `false` once the run has stopped.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.stopped.is_some() {
            return Ok(false);
        }
        self.apply_due_crashes();
        if self.all_resolved() {
            self.stopped = Some(RunStatus::Quiescent);
            return Ok(false);
        }
        let clock = self.clock();
        if clock >= self.scenario.step_budget {
            self.stopped = Some(RunStatus::BudgetExhausted);
            return Ok(false);
        }
        let runnable = self.runnable();
        if runnable.is_empty() {
            match self.next_start_step() {
                Some(s) => {
                    self.world.borrow_mut().sub.advance_clock(s);
                    return Ok(true);
                }
                None => {
                    self.stopped = Some(RunStatus::Stalled);
                    return Ok(false);
                }
            }
        }
        match self.picker.pick(&runnable) {
            Ok(Some(u)) => self.resume(u)?,
            Ok(None) => {
                self.stopped = Some(RunStatus::ScriptEnded);
                return Ok(false);
            }
            Err(PickError::Invalid(p)) => return Err(SimError::InvalidPick(p)),
        }
        Ok(true)
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        while self.step()? {}
        Ok(self.finish())
    }

    /// Stops the run (if still going) and returns its trace.
    pub fn finish(mut self) -> Trace {
        self.apply_due_crashes();
        let status = self.stopped.unwrap_or(RunStatus::BudgetExhausted);
        // Drop step machines before taking the log: they hold handles to the world.
        self.slots.clear();
        let mut w = self.world.borrow_mut();
        let clock = w.sub.clock();
        let events = w.sub.take_events();
        let ops = self.ops.iter().map(|o| o.status).collect();
        Trace { events, outcome: Outcome { status, fair: self.scenario.schedule.is_fair(), clock, ops } }
    }

    fn apply_due_crashes(&mut self) {
        let clock = self.clock();
        let due: Vec<ProcessId> = self
            .procs
            .iter()
            .filter(|(_, s)| !s.crashed && matches!(s.fault, FaultModel::Crash { at_step } if at_step <= clock))
            .map(|(p, _)| *p)
            .collect();
        for p in due {
            self.crash(p);
        }
    }

    fn op_resolved(&self, i: usize) -> bool {
        matches!(self.ops[i].status, OpStatus::Completed | OpStatus::CrashedOwner)
    }

    fn all_resolved(&self) -> bool {
        self.scenario.workload.iter().enumerate().all(|(i, item)| {
            let o = &self.ops[i];
            if o.frozen || self.op_resolved(i) {
                return true;
            }
            let st = &self.procs[&item.proc];
            o.status == OpStatus::NotInvoked && (st.crashed || st.frozen)
        })
    }

    fn eligible(&self, p: ProcessId) -> Option<usize> {
        let st = &self.procs[&p];
        if st.crashed || st.frozen || st.busy.is_some() || st.fault.is_malicious() {
            return None;
        }
        let i = *st.queue.front()?;
        let item = &self.scenario.workload[i];
        if item.start_step.is_some_and(|s| s > self.clock()) {
            return None;
        }
        if item.after.is_some_and(|a| !self.op_resolved(a)) {
            return None;
        }
        Some(i)
    }

    fn next_start_step(&self) -> Option<u64> {
        let clock = self.clock();
        self.procs
            .iter()
            .filter(|(_, st)| !st.crashed && !st.frozen && st.busy.is_none())
            .filter_map(|(_, st)| st.queue.front())
            .filter(|&&i| self.scenario.workload[i].after.is_none_or(|a| self.op_resolved(a)))
            .filter_map(|&i| self.scenario.workload[i].start_step)
            .filter(|&s| s > clock)
            .min()
    }

    fn runnable(&self) -> Vec<Unit> {
        let mut out = Vec::new();
        for p in self.procs.keys() {
            if self.eligible(*p).is_some() {
                out.push(Unit::Invoke { proc: *p });
            }
        }
        let w = self.world.borrow();
        for key in self.slots.keys() {
            if w.threads.get(key).is_some_and(|t| t.request.is_some()) {
                out.push(Unit::Thread { proc: key.0, thread: key.1 });
            }
        }
        out.sort();
        out
    }

    fn resume(&mut self, u: Unit) -> Result<(), SimError> {
        match u {
            Unit::Invoke { proc } => {
                self.invoke(proc);
                Ok(())
            }
            Unit::Thread { proc, thread } => self.resume_thread((proc, thread)),
        }
    }

    fn invoke(&mut self, p: ProcessId) {
        let i = self.procs.get_mut(&p).and_then(|s| s.queue.pop_front()).expect("eligible");
        let op = self.scenario.workload[i].op.clone();
        let key = self.world.borrow_mut().fresh_thread(p);
        {
            let mut e = Event::new(0, p, key.1, EventKind::Invoke);
            e.op = Some(op.kind());
            if let Operation::Write { value } = &op {
                e.arg = Some(value.clone());
            }
            self.world.borrow_mut().sub.log(e);
        }
        let st = self.procs.get_mut(&p).expect("known process");
        st.busy = Some(i);
        self.ops[i].status = OpStatus::Pending;
        self.ops[i].steps_at_invoke = st.own_steps;
        let ctx = Ctx::new(self.world.clone(), key);
        let c = self.construction.clone();
        let fut: BoxFut<ThreadOut> = match op {
            Operation::Write { value } => {
                let f = c.write(ctx, value);
                Box::pin(async move {
                    f.await;
                    ThreadOut::Op(None)
                })
            }
            Operation::Read => {
                let f = c.read(ctx);
                Box::pin(async move { ThreadOut::Op(Some(f.await)) })
            }
        };
        self.slots.insert(key, Slot { fut, role: SlotRole::Op(i) });
        self.poll_thread(key);
    }

    fn resume_thread(&mut self, key: ThreadKey) -> Result<(), SimError> {
        let p = key.0;
        let st = &self.procs[&p];
        if let FaultModel::CrashAfter { own_steps } = st.fault {
            if st.own_steps >= own_steps {
                self.crash(p);
                return Ok(());
            }
        }
        let req = {
            let mut w = self.world.borrow_mut();
            w.threads.get_mut(&key).and_then(|t| t.request.take()).expect("runnable thread has a request")
        };
        let reply = {
            let mut w = self.world.borrow_mut();
            match req {
                Request::Read(reg) => w.sub.reg_read(&reg, p, key.1).map(Reply::Read),
                Request::Write(reg, v) => w.sub.reg_write(&reg, p, key.1, v).map(|_| Reply::Written),
            }
        }
        .map_err(|source| SimError::Substrate { proc: p, source })?;
        self.world.borrow_mut().threads.get_mut(&key).expect("live thread").reply = Some(reply);
        let st = self.procs.get_mut(&p).expect("known process");
        st.own_steps += 1;
        self.poll_thread(key);
        let st = &self.procs[&p];
        if let Some(i) = st.busy {
            if st.own_steps - self.ops[i].steps_at_invoke >= self.scenario.per_op_budget {
                self.freeze(p, i);
            }
        }
        Ok(())
    }

    fn poll_thread(&mut self, key: ThreadKey) {
        let mut work = vec![key];
        let mut cx = Context::from_waker(Waker::noop());
        while let Some(k) = work.pop() {
            let Some(slot) = self.slots.get_mut(&k) else { continue };
            let res = slot.fut.as_mut().poll(&mut cx);
            let spawns = std::mem::take(&mut self.world.borrow_mut().spawns);
            for s in spawns.into_iter().rev() {
                let parent = self.world.borrow().joins[s.join].parent;
                self.joins_by_parent.entry(parent).or_default().push(s.join);
                let f = s.fut;
                self.slots.insert(
                    s.key,
                    Slot {
                        fut: Box::pin(async move { ThreadOut::Branch(f.await) }),
                        role: SlotRole::Branch { join: s.join, side: s.side },
                    },
                );
                work.push(s.key);
            }
            match res {
                Poll::Ready(out) => self.complete(k, out, &mut work),
                Poll::Pending => {
                    let idle_doomed = {
                        let w = self.world.borrow();
                        w.threads.get(&k).is_some_and(|t| t.doomed && t.shield == 0 && t.request.is_none())
                    };
                    if idle_doomed {
                        self.drop_doomed(k, &mut work);
                    }
                }
            }
        }
    }

    fn complete(&mut self, k: ThreadKey, out: ThreadOut, work: &mut Vec<ThreadKey>) {
        let doomed = self.world.borrow().threads.get(&k).is_some_and(|t| t.doomed);
        if doomed {
            self.drop_doomed(k, work);
            return;
        }
        let slot = self.slots.remove(&k).expect("completed thread has a slot");
        self.world.borrow_mut().threads.remove(&k);
        match (slot.role, out) {
            (SlotRole::Op(i), ThreadOut::Op(ret)) => {
                let mut e = Event::new(0, k.0, k.1, EventKind::Respond);
                e.op = Some(self.scenario.workload[i].op.kind());
                e.ret = ret;
                self.world.borrow_mut().sub.log(e);
                self.ops[i].status = OpStatus::Completed;
                self.procs.get_mut(&k.0).expect("known process").busy = None;
            }
            (SlotRole::Branch { join, side }, ThreadOut::Branch(r)) => {
                let (parent, sibling, decided) = {
                    let mut w = self.world.borrow_mut();
                    let j = &mut w.joins[join];
                    j.finished[side] = true;
                    let sibling = j.children[1 - side];
                    let decided = match (&j.result, r) {
                        (Some(_), _) => false,
                        (None, Some(t)) => {
                            j.result = Some(Some(t));
                            true
                        }
                        (None, None) if j.finished[1 - side] => {
                            j.result = Some(None);
                            true
                        }
                        (None, None) => false,
                    };
                    (j.parent, sibling, decided)
                };
                if decided {
                    if self.slots.contains_key(&sibling) {
                        self.cancel_tree(sibling, join);
                    }
                    let mut w = self.world.borrow_mut();
                    let j = &mut w.joins[join];
                    if j.blockers == 0 {
                        j.ready = true;
                        work.push(parent);
                    }
                }
            }
            (SlotRole::Script, _) => {}
            _ => unreachable!("thread output does not match its role"),
        }
    }

    /// Cancels `k` and everything it forked. Threads inside a shielded region
    /// keep running until they leave it and hold `join` back meanwhile.
    fn cancel_tree(&mut self, k: ThreadKey, join: usize) {
        if let Some(children) = self.joins_by_parent.remove(&k) {
            for j in children {
                let kids = self.world.borrow().joins[j].children;
                for c in kids {
                    if self.slots.contains_key(&c) {
                        self.cancel_tree(c, join);
                    }
                }
            }
        }
        let mut w = self.world.borrow_mut();
        let shielded = w.threads.get(&k).is_some_and(|t| t.shield > 0);
        if shielded {
            w.threads.get_mut(&k).expect("checked").doomed = true;
            w.joins[join].blockers += 1;
            self.doomed_blocks.entry(k).or_default().push(join);
        } else {
            w.threads.remove(&k);
            drop(w);
            self.slots.remove(&k);
            self.doomed_blocks.remove(&k);
        }
    }

    fn drop_doomed(&mut self, k: ThreadKey, work: &mut Vec<ThreadKey>) {
        self.slots.remove(&k);
        self.joins_by_parent.remove(&k);
        let mut w = self.world.borrow_mut();
        w.threads.remove(&k);
        for j in self.doomed_blocks.remove(&k).unwrap_or_default() {
            let js = &mut w.joins[j];
            js.blockers -= 1;
            if js.blockers == 0 && js.result.is_some() {
                js.ready = true;
                work.push(js.parent);
            }
        }
    }

    fn remove_threads_of(&mut self, p: ProcessId) {
        let keys: Vec<ThreadKey> = self.slots.range((p, 0)..=(p, u32::MAX)).map(|(k, _)| *k).collect();
        let mut w = self.world.borrow_mut();
        for k in keys {
            self.slots.remove(&k);
            w.threads.remove(&k);
            self.doomed_blocks.remove(&k);
            self.joins_by_parent.remove(&k);
        }
    }

    fn crash(&mut self, p: ProcessId) {
        self.remove_threads_of(p);
        self.world.borrow_mut().sub.crash(p, 0);
        let st = self.procs.get_mut(&p).expect("known process");
        st.crashed = true;
        if let Some(i) = st.busy.take() {
            if !self.ops[i].frozen {
                self.ops[i].status = OpStatus::CrashedOwner;
            }
        }
    }

    fn freeze(&mut self, p: ProcessId, i: usize) {
        self.remove_threads_of(p);
        let st = self.procs.get_mut(&p).expect("known process");
        st.frozen = true;
        st.busy = None;
        self.ops[i].frozen = true;
    }
}

/// Runs a scenario to completion or budget.
pub fn run(scenario: Scenario) -> Result<Trace, SimError> {
    Sim::new(scenario)?.run()
}
