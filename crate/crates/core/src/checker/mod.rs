//! Correctness checks over traces: the two register properties, ⊥ returns,
//! conditional wait-freedom, construction-internal invariants, and a
//! brute-force linearizability oracle used to cross-check the rest.

mod enumerate;
mod history;
mod invariants;
mod oracle;
mod properties;
mod waitfree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use enumerate::{for_each_small_history, EnumStats};
pub use history::{index_of, History, HistoryError, OpRecord, OpRecordKind, ReadIndex};
pub use invariants::{
    check_substrate, invariant_violations, validate_internal_invariants, InvariantRule, InvariantViolation,
};
pub use oracle::{oracle_linearize, ORACLE_CAP};
pub use properties::{check_bottom_returns, check_property1, check_property2};
pub use waitfree::{check_wait_freedom, infer_outcome, Budgets};

use crate::constructions::Layout;
use crate::model::{FaultModel, ProcessId};
use crate::trace::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Violation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationClass {
    Property1,
    Property2,
    BottomReturn,
    WaitFreedom,
    InternalInvariant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    /// Which check produced the verdict; on violations, the violation class.
    pub class: ViolationClass,
    /// Step indices of the events that witness a violation.
    pub witnesses: Vec<u64>,
    pub explanation: String,
    /// Set when operations were left pending in a run the wait-freedom
    /// guarantee does not cover.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub outside_guarantee: bool,
}

impl Verdict {
    pub fn pass(class: ViolationClass, explanation: impl Into<String>) -> Verdict {
        Verdict {
            status: Status::Pass,
            class,
            witnesses: Vec::new(),
            explanation: explanation.into(),
            outside_guarantee: false,
        }
    }

    pub fn violation(class: ViolationClass, mut witnesses: Vec<u64>, explanation: impl Into<String>) -> Verdict {
        witnesses.sort_unstable();
        witnesses.dedup();
        debug_assert!(!witnesses.is_empty(), "violations need a witness");
        Verdict {
            status: Status::Violation,
            class,
            witnesses,
            explanation: explanation.into(),
            outside_guarantee: false,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("schedule is not fair and {pending} operation(s) of correct processes are pending; refusing to conclude")]
    UnfairSchedule { pending: usize },
    #[error("history has {ops} operations; the oracle handles at most {cap}")]
    TooLarge { ops: usize, cap: usize },
}

/// Every verdict for one run: the property checks on the top-level register,
/// wait-freedom, and the internal invariants of the construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub verdicts: Vec<Verdict>,
    /// Checks that declined to conclude, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inconclusive: Vec<String>,
}

impl Report {
    pub fn violations(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.is_pass())
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(Verdict::is_pass)
    }

    pub fn outside_guarantee(&self) -> bool {
        self.verdicts.iter().any(|v| v.outside_guarantee)
    }
}

/// Runs every checker pass that applies to the top-level register.
pub fn check_all(
    trace: &Trace,
    layout: &Layout,
    faults: &BTreeMap<ProcessId, FaultModel>,
    budgets: Budgets,
) -> Result<Report, CheckError> {
    let h = History::from_events(&trace.events, layout.root(), faults)?;
    let mut report = Report {
        verdicts: vec![
            check_property1(&h, h.writer_honest),
            check_property2(&h, h.writer_honest),
            check_bottom_returns(&h, faults),
        ],
        inconclusive: Vec::new(),
    };
    match check_wait_freedom(trace, faults, budgets) {
        Ok(v) => report.verdicts.push(v),
        Err(e @ CheckError::UnfairSchedule { .. }) => report.inconclusive.push(format!("wait-freedom: {e}")),
        Err(e) => return Err(e),
    }
    report.verdicts.push(validate_internal_invariants(trace, layout, faults));
    Ok(report)
}
