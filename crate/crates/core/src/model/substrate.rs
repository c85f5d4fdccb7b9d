use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::{CellValue, ProcessId, RegId, RegisterSpec, SeqTuple, Signature, SignatureOracle, Token};
use crate::trace::{Event, EventKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Access::Read => "read",
            Access::Write => "write",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstrateError {
    #[error("{actor} may not {access} register {reg}")]
    AccessViolation { reg: RegId, actor: ProcessId, access: Access },
    #[error("{actor} has crashed")]
    CrashedActor { actor: ProcessId },
    #[error("unknown register {0}")]
    UnknownRegister(RegId),
    #[error("register {0} declared twice")]
    DuplicateRegister(RegId),
    #[error("{actor} wrote signature token {} it never observed", token.0)]
    Forgery { actor: ProcessId, token: Token },
}

struct Cell {
    spec: RegisterSpec,
    value: CellValue,
}

/// The atomic register substrate: access-controlled cells, the signature
/// oracle, and the event log. Every access is one step with a fresh index.
pub struct Substrate {
    cells: HashMap<RegId, Cell>,
    oracle: SignatureOracle,
    /// Tokens visible to everybody because they sit in initial register values.
    public: HashSet<Token>,
    observed: HashMap<ProcessId, HashSet<Token>>,
    crashed: BTreeSet<ProcessId>,
    events: Vec<Event>,
    clock: u64,
}

impl Default for Substrate {
    fn default() -> Self {
        Self::new()
    }
}

impl Substrate {
    pub fn new() -> Substrate {
        Substrate {
            cells: HashMap::new(),
            oracle: SignatureOracle::new(),
            public: HashSet::new(),
            observed: HashMap::new(),
            crashed: BTreeSet::new(),
            events: Vec::new(),
            clock: 0,
        }
    }

    pub fn declare(&mut self, spec: RegisterSpec) -> Result<(), SubstrateError> {
        if self.cells.contains_key(&spec.id) {
            return Err(SubstrateError::DuplicateRegister(spec.id));
        }
        let mut toks = Vec::new();
        spec.initial.tokens(&mut toks);
        self.public.extend(toks);
        let value = spec.initial.clone();
        self.cells.insert(spec.id.clone(), Cell { spec, value });
        Ok(())
    }

    /// Signs during setup, before any process runs. Not logged.
    pub fn sign_initial(&mut self, tuple: SeqTuple, signer: ProcessId) -> Signature {
        let s = self.oracle.sign(tuple, signer);
        self.public.insert(s.token);
        s
    }

    pub fn spec(&self, reg: &RegId) -> Option<&RegisterSpec> {
        self.cells.get(reg).map(|c| &c.spec)
    }

    pub fn specs(&self) -> impl Iterator<Item = &RegisterSpec> {
        self.cells.values().map(|c| &c.spec)
    }

    /// Registers `actor` may write, in id order.
    pub fn writable_by(&self, actor: ProcessId) -> Vec<&RegisterSpec> {
        let mut v: Vec<_> = self.specs().filter(|s| s.writer == actor).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    pub fn peek(&self, reg: &RegId) -> Option<&CellValue> {
        self.cells.get(reg).map(|c| &c.value)
    }

    pub fn is_crashed(&self, p: ProcessId) -> bool {
        self.crashed.contains(&p)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Moves the clock forward without emitting events.
    pub fn advance_clock(&mut self, to: u64) {
        self.clock = self.clock.max(to);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    pub fn oracle(&self) -> &SignatureOracle {
        &self.oracle
    }

    fn check_alive(&self, actor: ProcessId) -> Result<(), SubstrateError> {
        if self.crashed.contains(&actor) {
            Err(SubstrateError::CrashedActor { actor })
        } else {
            Ok(())
        }
    }

    fn cell(&self, reg: &RegId) -> Result<&Cell, SubstrateError> {
        self.cells.get(reg).ok_or_else(|| SubstrateError::UnknownRegister(reg.clone()))
    }

    pub fn reg_read(&mut self, reg: &RegId, actor: ProcessId, thread: u32) -> Result<CellValue, SubstrateError> {
        self.check_alive(actor)?;
        let cell = self.cell(reg)?;
        if !cell.spec.readable_by(actor) {
            return Err(SubstrateError::AccessViolation { reg: reg.clone(), actor, access: Access::Read });
        }
        let v = cell.value.clone();
        let mut toks = Vec::new();
        v.tokens(&mut toks);
        if !toks.is_empty() {
            self.observed.entry(actor).or_default().extend(toks);
        }
        let mut e = self.event(actor, thread, EventKind::RegRead);
        e.reg = Some(reg.clone());
        e.value = Some(v.clone());
        self.events.push(e);
        Ok(v)
    }

    pub fn reg_write(
        &mut self,
        reg: &RegId,
        actor: ProcessId,
        thread: u32,
        v: CellValue,
    ) -> Result<(), SubstrateError> {
        self.check_alive(actor)?;
        let cell = self.cell(reg)?;
        if cell.spec.writer != actor {
            return Err(SubstrateError::AccessViolation { reg: reg.clone(), actor, access: Access::Write });
        }
        let mut toks = Vec::new();
        v.tokens(&mut toks);
        for t in toks {
            let seen = self.public.contains(&t) || self.observed.get(&actor).is_some_and(|s| s.contains(&t));
            if !seen {
                return Err(SubstrateError::Forgery { actor, token: t });
            }
        }
        let mut e = self.event(actor, thread, EventKind::RegWrite);
        e.reg = Some(reg.clone());
        e.value = Some(v.clone());
        self.events.push(e);
        self.cells.get_mut(reg).expect("checked above").value = v;
        Ok(())
    }

    /// Issues a signature for `signer`. Logged as a local `sign` event.
    pub fn sign(&mut self, tuple: SeqTuple, signer: ProcessId, thread: u32) -> Signature {
        let s = self.oracle.sign(tuple, signer);
        self.observed.entry(signer).or_default().insert(s.token);
        let mut e = self.event(signer, thread, EventKind::Sign);
        e.value = Some(CellValue::Signed(s.clone()));
        self.events.push(e);
        s
    }

    pub fn verify(&self, s: &Signature, expected_signer: ProcessId) -> bool {
        self.oracle.verify(s, expected_signer)
    }

    pub fn crash(&mut self, actor: ProcessId, thread: u32) {
        if self.crashed.insert(actor) {
            let e = self.event(actor, thread, EventKind::Crash);
            self.events.push(e);
        }
    }

    /// Appends a non-register event (invoke/respond) built by the caller.
    pub fn log(&mut self, mut e: Event) {
        e.step = self.next_step();
        self.events.push(e);
    }

    fn next_step(&mut self) -> u64 {
        let s = self.clock;
        self.clock += 1;
        s
    }

    fn event(&mut self, proc: ProcessId, thread: u32, kind: EventKind) -> Event {
        let step = self.next_step();
        Event::new(step, proc, thread, kind)
    }
}
