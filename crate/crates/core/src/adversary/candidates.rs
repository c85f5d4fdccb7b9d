//! Black-box candidates for the attack harness, plus the registry that
//! says which register rule each one is checked under.

use std::cell::Cell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::constructions::{plain0, readers, BuildError, Built, Construction, InstanceInfo, InstanceKind, Layout};
use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Substrate, Value};
use crate::sim::{BoxFut, Ctx};
use crate::trace::ReadReturn;

/// Which registers a candidate may declare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegisterRule {
    /// No register is readable by all n readers.
    NoFullRegisters,
    /// Readers may own registers readable by everybody; the writer may not.
    ReaderFullRegisters,
    /// Anything goes. Only meant for control candidates.
    Unrestricted,
}

impl RegisterRule {
    /// The first register that breaks the rule, if any.
    pub fn violation<'a>(&self, layout: &'a Layout, n: u32) -> Option<&'a RegisterSpec> {
        let full = |r: &RegisterSpec| (1..=n).all(|i| r.readers.contains(&ProcessId(i)));
        layout.registers.iter().find(|r| match self {
            RegisterRule::NoFullRegisters => full(r),
            RegisterRule::ReaderFullRegisters => r.writer == ProcessId::WRITER && full(r),
            RegisterRule::Unrestricted => false,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CandidateImpl {
    pub name: &'static str,
    pub rule: RegisterRule,
}

pub const CANDIDATES: &[CandidateImpl] = &[
    CandidateImpl { name: "naive-gossip", rule: RegisterRule::NoFullRegisters },
    CandidateImpl { name: "atomic-1wnr", rule: RegisterRule::Unrestricted },
    CandidateImpl { name: "algo1", rule: RegisterRule::NoFullRegisters },
    CandidateImpl { name: "algo3", rule: RegisterRule::NoFullRegisters },
];

pub fn candidate(name: &str) -> Option<CandidateImpl> {
    CANDIDATES.iter().copied().find(|c| c.name == name)
}

pub fn build(name: &str, n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    match name {
        "naive-gossip" => naive_gossip(n, u0, sub),
        "atomic-1wnr" => atomic(n, u0, sub),
        other => Err(BuildError::UnknownConstruction(other.to_owned())),
    }
}

fn opaque(layout: &mut Layout, n: u32, u0: &Value) {
    layout.instances.push(InstanceInfo {
        key: None,
        writer: ProcessId::WRITER,
        readers: readers(n),
        u0: u0.clone(),
        kind: InstanceKind::Opaque,
    });
}

/// The writer publishes to readers `1..n-1` only; readers gossip anything
/// newer than the initial value to each other before returning it.
pub struct NaiveGossip {
    n: u32,
    u0: Value,
    rw: RegId,
    gossip: Vec<RegId>,
    c: Cell<u64>,
}

fn naive_gossip(n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    if n < 2 {
        return Err(BuildError::UnsupportedN { name: "naive-gossip".into(), n, reason: "needs two readers" });
    }
    let mut layout = Layout::default();
    let rs = readers(n);
    let rw = layout.declare(
        sub,
        RegisterSpec::new(RegId::new("NG/Rw"), ProcessId::WRITER, rs[..rs.len() - 1].iter().copied(), plain0(u0)),
    )?;
    let mut gossip = Vec::new();
    for &i in &rs {
        let others = rs.iter().copied().filter(|&j| j != i);
        gossip
            .push(layout.declare(sub, RegisterSpec::new(RegId::new(format!("NG/G/{}", i.0)), i, others, plain0(u0)))?);
    }
    opaque(&mut layout, n, u0);
    let inst = NaiveGossip { n, u0: u0.clone(), rw, gossip, c: Cell::new(0) };
    Ok(Built { construction: Rc::new(inst), layout })
}

impl Construction for NaiveGossip {
    fn name(&self) -> &str {
        "naive-gossip"
    }

    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()> {
        Box::pin(async move {
            self.c.set(self.c.get() + 1);
            ctx.write(&self.rw, CellValue::Plain(SeqTuple::new(self.c.get(), u))).await;
        })
    }

    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn> {
        Box::pin(async move {
            let me = ctx.proc();
            let mut best = SeqTuple::initial(&self.u0);
            let mut consider = |c: CellValue| {
                if let CellValue::Plain(t) = c {
                    if t.k > best.k {
                        best = t;
                    }
                }
            };
            if me.0 < self.n {
                consider(ctx.read(&self.rw).await);
            }
            for j in 1..=self.n {
                if j != me.0 {
                    consider(ctx.read(&self.gossip[j as usize - 1]).await);
                }
            }
            if best.k > 0 {
                ctx.write(&self.gossip[me.0 as usize - 1], CellValue::Plain(best.clone())).await;
            }
            ReadReturn::Value { u: best.u }
        })
    }
}

/// A plain atomic 1WnR register; the control candidate.
pub struct Atomic1WnR {
    r: RegId,
    c: Cell<u64>,
}

fn atomic(n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    let mut layout = Layout::default();
    let r = layout.declare(sub, RegisterSpec::new(RegId::new("A1/R"), ProcessId::WRITER, readers(n), plain0(u0)))?;
    opaque(&mut layout, n, u0);
    Ok(Built { construction: Rc::new(Atomic1WnR { r, c: Cell::new(0) }), layout })
}

impl Construction for Atomic1WnR {
    fn name(&self) -> &str {
        "atomic-1wnr"
    }

    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()> {
        Box::pin(async move {
            self.c.set(self.c.get() + 1);
            ctx.write(&self.r, CellValue::Plain(SeqTuple::new(self.c.get(), u))).await;
        })
    }

    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn> {
        Box::pin(async move {
            match ctx.read(&self.r).await {
                CellValue::Plain(t) => ReadReturn::Value { u: t.u },
                _ => ReadReturn::Bottom,
            }
        })
    }
}
