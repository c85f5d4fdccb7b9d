use std::cell::RefCell;
use std::collections::HashMap;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::model::Value;
use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Signature, Substrate};
use crate::trace::{Event, EventKind, OpKind, ReadReturn};

pub type BoxFut<T> = Pin<Box<dyn Future<Output = T>>>;

pub type ThreadKey = (ProcessId, u32);

pub(crate) enum Request {
    Read(RegId),
    Write(RegId, CellValue),
}

pub(crate) enum Reply {
    Read(CellValue),
    Written,
}

#[derive(Default)]
pub(crate) struct ThreadCell {
    pub request: Option<Request>,
    pub reply: Option<Reply>,
    pub shield: u32,
    pub doomed: bool,
}

pub(crate) struct Spawn {
    pub key: ThreadKey,
    pub fut: BoxFut<Option<SeqTuple>>,
    pub join: usize,
    pub side: usize,
}

pub(crate) struct JoinState {
    pub parent: ThreadKey,
    pub children: [ThreadKey; 2],
    pub finished: [bool; 2],
    /// Set once the join has an outcome; the parent still waits for `blockers`.
    pub result: Option<Option<SeqTuple>>,
    pub blockers: usize,
    pub ready: bool,
}

/// Mutable state shared between the scheduler and the running step machines.
pub(crate) struct World {
    pub sub: Substrate,
    pub threads: HashMap<ThreadKey, ThreadCell>,
    pub spawns: Vec<Spawn>,
    pub joins: Vec<JoinState>,
    next_tid: HashMap<ProcessId, u32>,
}

impl World {
    pub fn new(sub: Substrate) -> World {
        World { sub, threads: HashMap::new(), spawns: Vec::new(), joins: Vec::new(), next_tid: HashMap::new() }
    }

    pub fn fresh_thread(&mut self, proc: ProcessId) -> ThreadKey {
        let n = self.next_tid.entry(proc).or_insert(0);
        let key = (proc, *n);
        *n += 1;
        self.threads.insert(key, ThreadCell::default());
        key
    }

    fn silenced(&self, key: ThreadKey) -> bool {
        self.threads.get(&key).is_none_or(|t| t.doomed && t.shield == 0)
    }
}

/// Handle through which a step machine touches the world. One per logical thread.
#[derive(Clone)]
pub struct Ctx {
    world: Rc<RefCell<World>>,
    proc: ProcessId,
    thread: u32,
}

impl Ctx {
    pub(crate) fn new(world: Rc<RefCell<World>>, key: ThreadKey) -> Ctx {
        Ctx { world, proc: key.0, thread: key.1 }
    }

    pub fn proc(&self) -> ProcessId {
        self.proc
    }

    pub fn thread(&self) -> u32 {
        self.thread
    }

    fn key(&self) -> ThreadKey {
        (self.proc, self.thread)
    }

    /// One atomic register read; completes at the scheduler's next resumption.
    pub fn read(&self, reg: &RegId) -> impl Future<Output = CellValue> + 'static {
        let f = Access { ctx: self.clone(), req: Some(Request::Read(reg.clone())) };
        async move {
            match f.await {
                Reply::Read(v) => v,
                Reply::Written => unreachable!("read answered with a write ack"),
            }
        }
    }

    /// One atomic register write; completes at the scheduler's next resumption.
    pub fn write(&self, reg: &RegId, v: CellValue) -> impl Future<Output = ()> + 'static {
        let f = Access { ctx: self.clone(), req: Some(Request::Write(reg.clone(), v)) };
        async move {
            f.await;
        }
    }

    pub fn sign(&self, tuple: SeqTuple) -> Signature {
        let mut w = self.world.borrow_mut();
        if w.silenced(self.key()) {
            // Never observed by anyone: the thread takes no further steps.
            return Signature { tuple, signer: self.proc, token: crate::model::Token(u64::MAX) };
        }
        w.sub.sign(tuple, self.proc, self.thread)
    }

    pub fn verify(&self, s: &Signature, signer: ProcessId) -> bool {
        self.world.borrow().sub.verify(s, signer)
    }

    pub fn writable_registers(&self) -> Vec<RegisterSpec> {
        self.world.borrow().sub.writable_by(self.proc).into_iter().cloned().collect()
    }

    pub fn log_invoke(&self, instance: &RegId, op: OpKind, arg: Option<Value>) {
        let mut e = Event::new(0, self.proc, self.thread, EventKind::Invoke);
        e.reg = Some(instance.clone());
        e.op = Some(op);
        e.arg = arg;
        self.log(e);
    }

    pub fn log_respond(&self, instance: &RegId, op: OpKind, ret: Option<ReadReturn>) {
        let mut e = Event::new(0, self.proc, self.thread, EventKind::Respond);
        e.reg = Some(instance.clone());
        e.op = Some(op);
        e.ret = ret;
        self.log(e);
    }

    fn log(&self, e: Event) {
        let mut w = self.world.borrow_mut();
        if !w.silenced(self.key()) {
            w.sub.log(e);
        }
    }

    /// While shielded, a thread that loses a cobegin keeps running; it is
    /// dropped once the shield is released.
    pub fn shield(&self) {
        if let Some(t) = self.world.borrow_mut().threads.get_mut(&self.key()) {
            t.shield += 1;
        }
    }

    pub fn unshield(&self) {
        if let Some(t) = self.world.borrow_mut().threads.get_mut(&self.key()) {
            t.shield = t.shield.saturating_sub(1);
        }
    }

    /// Runs two branches as separate threads. The first `Some` wins and the
    /// other branch is cancelled; if both finish with `None` the result is `None`.
    pub fn cobegin(
        &self,
        a: impl FnOnce(Ctx) -> BoxFut<Option<SeqTuple>>,
        b: impl FnOnce(Ctx) -> BoxFut<Option<SeqTuple>>,
    ) -> impl Future<Output = Option<SeqTuple>> + 'static {
        let join = {
            let mut w = self.world.borrow_mut();
            if w.silenced(self.key()) {
                // A cancelled thread forks nothing; this join never resolves.
                let join = w.joins.len();
                w.joins.push(JoinState {
                    parent: self.key(),
                    children: [self.key(); 2],
                    finished: [false; 2],
                    result: None,
                    blockers: 0,
                    ready: false,
                });
                return Join { world: self.world.clone(), join };
            }
            let ka = w.fresh_thread(self.proc);
            let kb = w.fresh_thread(self.proc);
            let join = w.joins.len();
            w.joins.push(JoinState {
                parent: self.key(),
                children: [ka, kb],
                finished: [false; 2],
                result: None,
                blockers: 0,
                ready: false,
            });
            drop(w);
            let fa = a(Ctx::new(self.world.clone(), ka));
            let fb = b(Ctx::new(self.world.clone(), kb));
            let mut w = self.world.borrow_mut();
            w.spawns.push(Spawn { key: ka, fut: fa, join, side: 0 });
            w.spawns.push(Spawn { key: kb, fut: fb, join, side: 1 });
            join
        };
        Join { world: self.world.clone(), join }
    }
}

struct Access {
    ctx: Ctx,
    req: Option<Request>,
}

impl Future for Access {
    type Output = Reply;

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Reply> {
        let key = self.ctx.key();
        let world = self.ctx.world.clone();
        let mut w = world.borrow_mut();
        if w.silenced(key) {
            return Poll::Pending;
        }
        let cell = w.threads.get_mut(&key).expect("live thread");
        if let Some(req) = self.req.take() {
            cell.request = Some(req);
            return Poll::Pending;
        }
        match cell.reply.take() {
            Some(r) => Poll::Ready(r),
            None => Poll::Pending,
        }
    }
}

struct Join {
    world: Rc<RefCell<World>>,
    join: usize,
}

impl Future for Join {
    type Output = Option<SeqTuple>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Option<SeqTuple>> {
        let w = self.world.borrow();
        let j = &w.joins[self.join];
        match (&j.result, j.ready) {
            (Some(r), true) => Poll::Ready(r.clone()),
            _ => Poll::Pending,
        }
    }
}
