//! Construction for systems with unforgeable signatures. The writer signs
//! each tuple and hands it to every reader; a reader collects validly signed
//! tuples from the writer and all readers, keeps the freshest, and forwards it.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use super::{readers, BuildError, Built, Construction, InstanceInfo, InstanceKind, Layout};
use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Signature, Substrate, Value};
use crate::sim::{BoxFut, Ctx};
use crate::trace::ReadReturn;

pub struct Algo3 {
    readers: Vec<ProcessId>,
    /// `R_ij`, written by `i` and read by `j`.
    regs: HashMap<(ProcessId, ProcessId), RegId>,
    c: Cell<u64>,
}

pub fn write_steps(n: u32) -> u64 {
    n as u64
}

pub fn read_steps(n: u32) -> u64 {
    2 * n as u64 + 1
}

pub fn build(n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    if n < 1 {
        return Err(BuildError::UnsupportedN { name: "algo3".into(), n, reason: "needs a reader" });
    }
    let w = ProcessId::WRITER;
    let rs = readers(n);
    let init = CellValue::Signed(sub.sign_initial(SeqTuple::initial(u0), w));
    let mut layout = Layout::default();
    let mut regs = HashMap::new();
    let mut list = Vec::new();
    for i in std::iter::once(w).chain(rs.iter().copied()) {
        for &j in &rs {
            let id = RegId::new(format!("S{n}/R/{}-{}", i.0, j.0));
            let id = layout.declare(sub, RegisterSpec::new(id, i, [j], init.clone()))?;
            regs.insert((i, j), id.clone());
            list.push((i, j, id));
        }
    }
    layout.instances.push(InstanceInfo {
        key: None,
        writer: w,
        readers: rs.clone(),
        u0: u0.clone(),
        kind: InstanceKind::Algo3 { regs: list },
    });
    Ok(Built { construction: Rc::new(Algo3 { readers: rs, regs, c: Cell::new(0) }), layout })
}

impl Construction for Algo3 {
    fn name(&self) -> &str {
        "algo3"
    }

    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()> {
        Box::pin(async move {
            self.c.set(self.c.get() + 1);
            let s = ctx.sign(SeqTuple::new(self.c.get(), u));
            for &i in &self.readers {
                ctx.write(&self.regs[&(ProcessId::WRITER, i)], CellValue::Signed(s.clone())).await;
            }
        })
    }

    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn> {
        Box::pin(async move {
            let me = ctx.proc();
            let mut best: Option<Signature> = None;
            for i in std::iter::once(ProcessId::WRITER).chain(self.readers.iter().copied()) {
                if let CellValue::Signed(s) = ctx.read(&self.regs[&(i, me)]).await {
                    let fresher = best.as_ref().is_none_or(|b| s.tuple.k > b.tuple.k);
                    if fresher && ctx.verify(&s, ProcessId::WRITER) {
                        best = Some(s);
                    }
                }
            }
            let Some(best) = best else { return ReadReturn::Bottom };
            for &i in &self.readers {
                ctx.write(&self.regs[&(me, i)], CellValue::Signed(best.clone())).await;
            }
            ReadReturn::Tuple(best.tuple)
        })
    }
}
