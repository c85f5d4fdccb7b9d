//! Register constructions as step machines.
//!
//! * `algo1`: recursive two-phase construction of a 1WnR from 1W(n-1)Rs,
//!   bottoming out at atomic 1W1Rs.
//! * `algo2`: the 1W2R variant where q falls back on a local `last_read`.
//! * `algo3`: signed tuples over a full mesh of 1W1Rs.

pub mod algo1;
pub mod algo2;
pub mod algo3;

use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Substrate, SubstrateError, Value};
use crate::sim::{BoxFut, Ctx};
use crate::trace::{OpKind, ReadReturn};

/// A register implementation driven by the simulator.
pub trait Construction {
    fn name(&self) -> &str;
    fn write(self: Rc<Self>, ctx: Ctx, u: Value) -> BoxFut<()>;
    fn read(self: Rc<Self>, ctx: Ctx) -> BoxFut<ReadReturn>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("unknown construction {0:?}")]
    UnknownConstruction(String),
    #[error("{name} does not support n = {n}: {reason}")]
    UnsupportedN { name: String, n: u32, reason: &'static str },
    #[error(transparent)]
    Substrate(#[from] SubstrateError),
}

/// A base register, or a nested instance standing in for one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "slot", content = "id", rename_all = "snake_case")]
pub enum SlotRef {
    Atomic(RegId),
    Nested(RegId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    Algo1 {
        p: ProcessId,
        q: Vec<ProcessId>,
        rwp: RegId,
        rwq: SlotRef,
        rpq: SlotRef,
        rqq: Vec<(ProcessId, ProcessId, RegId)>,
    },
    Algo2 {
        p: ProcessId,
        q: ProcessId,
        rwp: RegId,
        rwq: RegId,
        rpq: RegId,
    },
    Algo3 {
        regs: Vec<(ProcessId, ProcessId, RegId)>,
    },
    Opaque,
}

/// One implemented register inside a run: the top-level one, or a nested
/// instance realizing an inner 1W(n-1)R.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceInfo {
    /// Trace key of this instance's operations; `None` for the top level.
    pub key: Option<RegId>,
    pub writer: ProcessId,
    pub readers: Vec<ProcessId>,
    pub u0: Value,
    pub kind: InstanceKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub registers: Vec<RegisterSpec>,
    /// Top-level instance first, then nested ones in construction order.
    pub instances: Vec<InstanceInfo>,
}

impl Layout {
    pub fn spec(&self, id: &RegId) -> Option<&RegisterSpec> {
        self.registers.iter().find(|r| &r.id == id)
    }

    pub fn root(&self) -> &InstanceInfo {
        &self.instances[0]
    }

    pub(crate) fn declare(&mut self, sub: &mut Substrate, spec: RegisterSpec) -> Result<RegId, BuildError> {
        let id = spec.id.clone();
        sub.declare(spec.clone())?;
        self.registers.push(spec);
        Ok(id)
    }
}

pub struct Built {
    pub construction: Rc<dyn Construction>,
    pub layout: Layout,
}

pub const NAMES: &[&str] = &["algo1", "algo2", "algo3", "naive-gossip", "atomic-1wnr"];

/// Instantiates a construction by name and declares its registers in `sub`.
pub fn build(name: &str, n: u32, u0: &Value, sub: &mut Substrate) -> Result<Built, BuildError> {
    match name {
        "algo1" => algo1::build(n, u0, sub),
        "algo2" => algo2::build(n, u0, sub),
        "algo3" => algo3::build(n, u0, sub),
        other => crate::adversary::candidates::build(other, n, u0, sub),
    }
}

/// Builds only the layout, on a scratch substrate.
pub fn layout_of(name: &str, n: u32, u0: &Value) -> Result<Layout, BuildError> {
    let mut sub = Substrate::new();
    build(name, n, u0, &mut sub).map(|b| b.layout)
}

pub(crate) fn readers(n: u32) -> Vec<ProcessId> {
    (1..=n).map(ProcessId).collect()
}

pub(crate) fn commit0(u0: &Value) -> CellValue {
    CellValue::Commit(SeqTuple::initial(u0))
}

pub(crate) fn plain0(u0: &Value) -> CellValue {
    CellValue::Plain(SeqTuple::initial(u0))
}

/// The outer cell carried by a nested instance's read result.
pub(crate) fn unwrap_cell(r: ReadReturn) -> CellValue {
    let u = match r {
        ReadReturn::Tuple(t) => t.u,
        ReadReturn::Value { u } => u,
        ReadReturn::Bottom => return CellValue::Bottom,
    };
    match u {
        Value::Cell(c) => *c,
        Value::Bytes(b) => CellValue::Garbage { bytes: b },
    }
}

pub(crate) fn plain_k(c: &CellValue) -> Option<u64> {
    match c {
        CellValue::Plain(t) => Some(t.k),
        _ => None,
    }
}

/// Runs a nested instance's Read as one logical register read.
pub(crate) fn nested_read<I>(inst: Rc<I>, key: RegId, ctx: Ctx) -> BoxFut<CellValue>
where
    I: Construction + 'static,
{
    Box::pin(async move {
        ctx.log_invoke(&key, OpKind::Read, None);
        let ret = inst.read(ctx.clone()).await;
        ctx.log_respond(&key, OpKind::Read, Some(ret.clone()));
        unwrap_cell(ret)
    })
}

/// Runs a nested instance's Write as one logical register write. The write
/// is shielded so that losing a cobegin never leaves it half done.
pub(crate) fn nested_write<I>(inst: Rc<I>, key: RegId, ctx: Ctx, v: CellValue) -> BoxFut<()>
where
    I: Construction + 'static,
{
    Box::pin(async move {
        ctx.shield();
        let arg = Value::cell(v);
        ctx.log_invoke(&key, OpKind::Write, Some(arg.clone()));
        inst.write(ctx.clone(), arg).await;
        ctx.log_respond(&key, OpKind::Write, None);
        ctx.unshield();
    })
}
