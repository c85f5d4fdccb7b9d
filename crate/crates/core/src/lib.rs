//! Deterministic simulation of Byzantine-tolerant single-writer register
//! constructions, with checkers for linearizability and wait-freedom and an
//! attack harness that replays the classic indistinguishability argument.

pub mod adversary;
pub mod checker;
pub mod constructions;
pub mod model;
pub mod sim;
pub mod sweep;
pub mod trace;

pub use model::{CellValue, FaultModel, ProcessId, RegId, RegisterSpec, SeqTuple, Value};
pub use sim::{run, Scenario, Schedule, Sim, SimError};
pub use trace::{Event, EventKind, ReadReturn, Trace};
