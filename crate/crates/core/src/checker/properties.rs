use std::collections::BTreeMap;

use super::history::{History, OpRecord, ReadIndex};
use super::{Verdict, ViolationClass};
use crate::model::{FaultModel, ProcessId};

fn honest_completed_reads(h: &History) -> impl Iterator<Item = (&OpRecord, ReadIndex)> {
    h.reads().filter(|r| r.honest && r.completed()).filter_map(|r| r.read_index().map(|i| (r, i)))
}

/// Every honest read returns the value of the last write preceding it or of
/// a write concurrent with it.
pub fn check_property1(h: &History, writer_honest: bool) -> Verdict {
    let class = ViolationClass::Property1;
    if !writer_honest {
        return Verdict::pass(class, "writer is malicious; nothing to check");
    }
    for (r, idx) in honest_completed_reads(h) {
        if idx == ReadIndex::Bottom {
            continue;
        }
        let last = h.writes().filter(|w| w.precedes(r)).max_by_key(|w| w.write_k());
        let l = last.and_then(OpRecord::write_k).unwrap_or(0);
        let ok = match idx {
            ReadIndex::Index(k) => k == l || h.writes().any(|w| w.write_k() == Some(k) && w.overlaps(r)),
            _ => false,
        };
        if ok {
            continue;
        }
        let mut witnesses = r.steps();
        if let Some(w) = last {
            witnesses.extend(w.steps());
        }
        let what = match idx {
            ReadIndex::Index(k) => {
                if let Some(w) = h.writes().find(|w| w.write_k() == Some(k)) {
                    witnesses.extend(w.steps());
                }
                format!("index {k}")
            }
            _ => "a value no write produced".to_owned(),
        };
        return Verdict::violation(
            class,
            witnesses,
            format!(
                "read by {} at step {} returned {what}; the last preceding write has index {l} and no concurrent write matches",
                r.proc, r.invoke_step
            ),
        );
    }
    Verdict::pass(class, "every honest read returned a current value")
}

/// No honest read returns an older value than an honest read preceding it.
pub fn check_property2(h: &History, writer_honest: bool) -> Verdict {
    let class = ViolationClass::Property2;
    if !writer_honest {
        return Verdict::pass(class, "writer is malicious; nothing to check");
    }
    let reads: Vec<(&OpRecord, u64)> = honest_completed_reads(h)
        .filter_map(|(r, i)| match i {
            ReadIndex::Index(k) => Some((r, k)),
            _ => None,
        })
        .collect();
    for &(a, ka) in &reads {
        for &(b, kb) in &reads {
            if a.precedes(b) && ka > kb {
                let mut witnesses = a.steps();
                witnesses.extend(b.steps());
                return Verdict::violation(
                    class,
                    witnesses,
                    format!(
                        "read by {} at step {} returned index {ka}, a later read by {} at step {} returned index {kb}",
                        a.proc, a.invoke_step, b.proc, b.invoke_step
                    ),
                );
            }
        }
    }
    Verdict::pass(class, "no new-old inversion between honest reads")
}

/// Honest readers return ⊥ only when the writer is malicious.
pub fn check_bottom_returns(h: &History, faults: &BTreeMap<ProcessId, FaultModel>) -> Verdict {
    let class = ViolationClass::BottomReturn;
    if faults.get(&h.writer).is_some_and(FaultModel::is_malicious) {
        return Verdict::pass(class, "writer is malicious; ⊥ is allowed");
    }
    let bottom = h
        .reads()
        .filter(|r| !faults.get(&r.proc).is_some_and(FaultModel::is_malicious))
        .find(|r| r.read_index() == Some(ReadIndex::Bottom));
    match bottom {
        Some(r) => Verdict::violation(
            class,
            r.steps(),
            format!("honest read by {} at step {} returned ⊥ under an honest writer", r.proc, r.invoke_step),
        ),
        None => Verdict::pass(class, "no ⊥ returned to an honest reader"),
    }
}
