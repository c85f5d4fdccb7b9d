//! Recursive 1WnR construction. The writer announces each tuple with a
//! prepare then a commit, first to the distinguished reader p and then to
//! the other readers Q through an inner 1W(n-1)R. Readers in Q that see a
//! prepare race two threads: one waits for the writer, the other asks p
//! and the peers in Q.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::{
    commit0, nested_read, nested_write, plain0, plain_k, readers, BuildError, Built, Construction, InstanceInfo,
    InstanceKind, Layout, SlotRef,
};
use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Substrate, Value};
use crate::sim::{BoxFut, Ctx};
use crate::trace::ReadReturn;

enum Slot {
    Atomic(RegId),
    Nested(Rc<Algo1>),
}

impl Slot {
    fn read(&self, ctx: Ctx) -> BoxFut<CellValue> {
        match self {
            Slot::Atomic(r) => Box::pin(ctx.read(r)),
            Slot::Nested(inst) => {
                let key = inst.key.clone().expect("nested instances are keyed");
                nested_read(inst.clone(), key, ctx)
            }
        }
    }

    fn write(&self, ctx: Ctx, v: CellValue) -> BoxFut<()> {
        match self {
            Slot::Atomic(r) => Box::pin(ctx.write(r, v)),
            Slot::Nested(inst) => {
                let key = inst.key.clone().expect("nested instances are keyed");
                nested_write(inst.clone(), key, ctx, v)
            }
        }
    }

    fn as_ref(&self) -> SlotRef {
        match self {
            Slot::Atomic(r) => SlotRef::Atomic(r.clone()),
            Slot::Nested(i) => SlotRef::Nested(i.key.clone().expect("nested instances are keyed")),
        }
    }
}

struct WriterLocal {
    c: u64,
    last_written: SeqTuple,
}

pub struct Algo1 {
    key: Option<RegId>,
    p: ProcessId,
    q: Vec<ProcessId>,
    rwp: RegId,
    rwq: Slot,
    rpq: Slot,
    rqq: HashMap<(ProcessId, ProcessId), RegId>,
    writer: RefCell<WriterLocal>,
    previous_k: Cell<u64>,
}

/// Register writes performed by one honest Write on an instance with `n` readers.
pub fn write_steps(n: u32) -> u64 {
    match n {
        0 | 1 => panic!("an instance needs at least two readers"),
        2 => 4,
        _ => 2 + 2 * write_steps(n - 1),
    }
}

pub fn build(n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    if n < 2 {
        return Err(BuildError::UnsupportedN { name: "algo1".into(), n, reason: "needs at least two readers" });
    }
    let mut layout = Layout::default();
    let inst = instance("", None, ProcessId::WRITER, &readers(n), u0.clone(), sub, &mut layout)?;
    // Nested instances were pushed innermost first; the top level must lead.
    layout.instances.reverse();
    Ok(Built { construction: inst, layout })
}

fn instance(
    prefix: &str,
    key: Option<RegId>,
    writer: ProcessId,
    rs: &[ProcessId],
    u0: Value,
    sub: &mut Substrate,
    layout: &mut Layout,
) -> Result<Rc<Algo1>, BuildError> {
    let n = rs.len();
    let path = format!("{prefix}I{n}");
    let p = rs[0];
    let q = rs[1..].to_vec();
    let rwp = layout.declare(sub, RegisterSpec::new(RegId::new(format!("{path}/Rwp")), writer, [p], commit0(&u0)))?;
    let mut rqq = HashMap::new();
    for &a in &q {
        for &b in &q {
            let id = RegId::new(format!("{path}/Rqq/{}-{}", a.0, b.0));
            rqq.insert((a, b), layout.declare(sub, RegisterSpec::new(id, a, [b], plain0(&u0)))?);
        }
    }
    let mut inner = |name: &str, w: ProcessId, init: CellValue| -> Result<Slot, BuildError> {
        if n == 2 {
            let id = RegId::new(format!("{path}/{name}"));
            Ok(Slot::Atomic(layout.declare(sub, RegisterSpec::new(id, w, q.iter().copied(), init))?))
        } else {
            let pre = format!("{path}/{name}/");
            let k = RegId::new(format!("{pre}I{}", n - 1));
            Ok(Slot::Nested(instance(&pre, Some(k), w, &q, Value::cell(init), sub, layout)?))
        }
    };
    let rwq = inner("RwQ", writer, commit0(&u0))?;
    let rpq = inner("RpQ", p, plain0(&u0))?;
    let mut rqq_list: Vec<_> = rqq.iter().map(|((a, b), id)| (*a, *b, id.clone())).collect();
    rqq_list.sort();
    layout.instances.push(InstanceInfo {
        key: key.clone(),
        writer,
        readers: rs.to_vec(),
        u0: u0.clone(),
        kind: InstanceKind::Algo1 {
            p,
            q: q.clone(),
            rwp: rwp.clone(),
            rwq: rwq.as_ref(),
            rpq: rpq.as_ref(),
            rqq: rqq_list,
        },
    });
    Ok(Rc::new(Algo1 {
        key,
        p,
        q,
        rwp,
        rwq,
        rpq,
        rqq,
        writer: RefCell::new(WriterLocal { c: 0, last_written: SeqTuple::initial(&u0) }),
        previous_k: Cell::new(0),
    }))
}

impl Algo1 {
    async fn read_p(self: Rc<Self>, ctx: Ctx) -> ReadReturn {
        match ctx.read(&self.rwp).await {
            CellValue::Commit(t) if t.k >= self.previous_k.get() => {
                self.rpq.write(ctx.clone(), CellValue::Plain(t.clone())).await;
                self.previous_k.set(t.k);
                ReadReturn::Tuple(t)
            }
            CellValue::Prepare { prev, .. } => ReadReturn::Tuple(prev),
            _ => ReadReturn::Bottom,
        }
    }

    async fn read_q(self: Rc<Self>, ctx: Ctx) -> ReadReturn {
        match self.rwq.read(ctx.clone()).await {
            CellValue::Commit(t) => ReadReturn::Tuple(t),
            CellValue::Prepare { prev, next } => {
                let (a, b) = (self.clone(), self.clone());
                let t1 = next.clone();
                let won = ctx
                    .cobegin(move |c| Box::pin(a.wait_for_writer(c, t1)), move |c| Box::pin(b.ask_peers(c, next, prev)))
                    .await;
                match won {
                    Some(t) => ReadReturn::Tuple(t),
                    // Neither thread returned: this read never responds.
                    None => std::future::pending().await,
                }
            }
            _ => ReadReturn::Bottom,
        }
    }

    async fn wait_for_writer(self: Rc<Self>, ctx: Ctx, t: SeqTuple) -> Option<SeqTuple> {
        loop {
            if let CellValue::Commit(x) = self.rwq.read(ctx.clone()).await {
                if x.k >= t.k {
                    return Some(t);
                }
            }
            if let CellValue::Prepare { next, .. } = self.rwq.read(ctx.clone()).await {
                if next.k > t.k {
                    return Some(t);
                }
            }
        }
    }

    async fn ask_peers(self: Rc<Self>, ctx: Ctx, t: SeqTuple, last_written: SeqTuple) -> Option<SeqTuple> {
        let me = ctx.proc();
        let caught_up = |c: &CellValue| plain_k(c).is_some_and(|k| k >= t.k);
        if caught_up(&self.rpq.read(ctx.clone()).await) {
            self.broadcast(&ctx, &t).await;
            return Some(t);
        }
        for &other in &self.q {
            let v = ctx.read(&self.rqq[&(other, me)]).await;
            if caught_up(&v) {
                if caught_up(&self.rpq.read(ctx.clone()).await) {
                    self.broadcast(&ctx, &t).await;
                    return Some(t);
                }
                return None;
            }
        }
        Some(last_written)
    }

    async fn broadcast(&self, ctx: &Ctx, t: &SeqTuple) {
        let me = ctx.proc();
        for &other in &self.q {
            ctx.write(&self.rqq[&(me, other)], CellValue::Plain(t.clone())).await;
        }
    }
}

impl Construction for Algo1 {
    fn name(&self) -> &str {
        "algo1"
    }

    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()> {
        Box::pin(async move {
            let (lw, t) = {
                let mut w = self.writer.borrow_mut();
                w.c += 1;
                (w.last_written.clone(), SeqTuple::new(w.c, u))
            };
            let prep = CellValue::prepare(lw, t.clone());
            ctx.write(&self.rwp, prep.clone()).await;
            self.rwq.write(ctx.clone(), prep).await;
            ctx.write(&self.rwp, CellValue::Commit(t.clone())).await;
            self.rwq.write(ctx.clone(), CellValue::Commit(t.clone())).await;
            self.writer.borrow_mut().last_written = t;
        })
    }

    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn> {
        if ctx.proc() == self.p {
            Box::pin(self.read_p(ctx))
        } else {
            assert!(self.q.contains(&ctx.proc()), "{} is not a reader of this instance", ctx.proc());
            Box::pin(self.read_q(ctx))
        }
    }
}
