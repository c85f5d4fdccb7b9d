//! 1W2R construction without threads: q falls back on the last tuple it
//! learned from p instead of asking peers.

use std::cell::RefCell;
use std::rc::Rc;

use super::{commit0, plain0, plain_k, BuildError, Built, Construction, InstanceInfo, InstanceKind, Layout};
use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Substrate, Value};
use crate::sim::{BoxFut, Ctx};
use crate::trace::ReadReturn;

pub struct Algo2 {
    p: ProcessId,
    rwp: RegId,
    rwq: RegId,
    rpq: RegId,
    c: RefCell<(u64, SeqTuple)>,
    last_read: RefCell<SeqTuple>,
}

pub fn build(n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    if n != 2 {
        return Err(BuildError::UnsupportedN { name: "algo2".into(), n, reason: "implements a 1W2R only" });
    }
    let (w, p, q) = (ProcessId::WRITER, ProcessId(1), ProcessId(2));
    let mut layout = Layout::default();
    let rwp = layout.declare(sub, RegisterSpec::new(RegId::new("A2/Rwp"), w, [p], commit0(u0)))?;
    let rwq = layout.declare(sub, RegisterSpec::new(RegId::new("A2/Rwq"), w, [q], commit0(u0)))?;
    let rpq = layout.declare(sub, RegisterSpec::new(RegId::new("A2/Rpq"), p, [q], plain0(u0)))?;
    layout.instances.push(InstanceInfo {
        key: None,
        writer: w,
        readers: vec![p, q],
        u0: u0.clone(),
        kind: InstanceKind::Algo2 { p, q, rwp: rwp.clone(), rwq: rwq.clone(), rpq: rpq.clone() },
    });
    let inst = Algo2 {
        p,
        rwp,
        rwq,
        rpq,
        c: RefCell::new((0, SeqTuple::initial(u0))),
        last_read: RefCell::new(SeqTuple::initial(u0)),
    };
    Ok(Built { construction: Rc::new(inst), layout })
}

impl Construction for Algo2 {
    fn name(&self) -> &str {
        "algo2"
    }

    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()> {
        Box::pin(async move {
            let (lw, t) = {
                let mut c = self.c.borrow_mut();
                c.0 += 1;
                (c.1.clone(), SeqTuple::new(c.0, u))
            };
            let prep = CellValue::prepare(lw, t.clone());
            ctx.write(&self.rwp, prep.clone()).await;
            ctx.write(&self.rwq, prep).await;
            ctx.write(&self.rwp, CellValue::Commit(t.clone())).await;
            ctx.write(&self.rwq, CellValue::Commit(t.clone())).await;
            self.c.borrow_mut().1 = t;
        })
    }

    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn> {
        Box::pin(async move {
            if ctx.proc() == self.p {
                // No previous_k guard here, unlike the recursive construction.
                return match ctx.read(&self.rwp).await {
                    CellValue::Commit(t) => {
                        ctx.write(&self.rpq, CellValue::Plain(t.clone())).await;
                        ReadReturn::Tuple(t)
                    }
                    CellValue::Prepare { prev, .. } => ReadReturn::Tuple(prev),
                    _ => ReadReturn::Bottom,
                };
            }
            match ctx.read(&self.rwq).await {
                CellValue::Commit(t) => ReadReturn::Tuple(t),
                CellValue::Prepare { prev, next } => {
                    if plain_k(&ctx.read(&self.rpq).await).is_some_and(|k| k >= next.k) {
                        *self.last_read.borrow_mut() = next.clone();
                        ReadReturn::Tuple(next)
                    } else if self.last_read.borrow().k >= next.k {
                        ReadReturn::Tuple(next)
                    } else {
                        ReadReturn::Tuple(prev)
                    }
                }
                _ => ReadReturn::Bottom,
            }
        })
    }
}
