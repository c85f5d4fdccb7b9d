//! Exhaustive generation of small register histories with an honest writer,
//! one per distinct precedence pattern and return assignment.

use std::collections::HashSet;

use super::history::{History, OpRecord, OpRecordKind, ReadIndex};
use crate::model::{ProcessId, Value};
use crate::trace::ReadReturn;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnumStats {
    pub patterns: usize,
    pub histories: usize,
}

/// Calls `f` on every history with up to `max_writes` writes and `max_reads`
/// reads (each read by its own reader). The last write may be pending; reads
/// return an index in `0..=writes` or ⊥.
pub fn for_each_small_history(max_writes: usize, max_reads: usize, mut f: impl FnMut(&History)) -> EnumStats {
    let mut stats = EnumStats::default();
    for w in 0..=max_writes {
        for r in 0..=max_reads {
            for pending in [false, true] {
                if pending && w == 0 {
                    continue;
                }
                for spans in patterns(w, r, pending) {
                    stats.patterns += 1;
                    stats.histories += with_returns(w, r, &spans, &mut f);
                }
            }
        }
    }
    stats
}

/// Distinct endpoint layouts, as (invoke, respond) positions per op: writes
/// first, then reads.
fn patterns(w: usize, r: usize, pending: bool) -> Vec<Vec<(u64, Option<u64>)>> {
    let n = w + r;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut spans = vec![(0u64, None); n];
    let mut started = vec![false; n];
    let mut ended = vec![false; n];
    let total = 2 * n - usize::from(pending);
    walk(w, pending, 0, total, &mut spans, &mut started, &mut ended, &mut seen, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    w: usize,
    pending: bool,
    pos: u64,
    total: usize,
    spans: &mut Vec<(u64, Option<u64>)>,
    started: &mut Vec<bool>,
    ended: &mut Vec<bool>,
    seen: &mut HashSet<u64>,
    out: &mut Vec<Vec<(u64, Option<u64>)>>,
) {
    let n = spans.len();
    if pos as usize == total {
        let mut mask = 0u64;
        for (i, a) in spans.iter().enumerate() {
            for (j, b) in spans.iter().enumerate() {
                if a.1.is_some_and(|e| e < b.0) {
                    mask |= 1 << (i * n + j);
                }
            }
        }
        if seen.insert(mask) {
            out.push(spans.clone());
        }
        return;
    }
    for i in 0..n {
        let is_write = i < w;
        if !started[i] {
            // The writer is sequential: write i starts after write i-1 responds.
            if is_write && i > 0 && !ended[i - 1] {
                continue;
            }
            started[i] = true;
            spans[i].0 = pos;
            walk(w, pending, pos + 1, total, spans, started, ended, seen, out);
            started[i] = false;
        } else if !ended[i] {
            if pending && i + 1 == w {
                continue;
            }
            ended[i] = true;
            spans[i].1 = Some(pos);
            walk(w, pending, pos + 1, total, spans, started, ended, seen, out);
            ended[i] = false;
            spans[i].1 = None;
        }
    }
}

fn with_returns(w: usize, r: usize, spans: &[(u64, Option<u64>)], f: &mut impl FnMut(&History)) -> usize {
    let choices = w + 2;
    let mut count = 0;
    for code in 0..choices.pow(r as u32) {
        let mut ops = Vec::with_capacity(w + r);
        for (i, &(inv, resp)) in spans.iter().enumerate().take(w) {
            ops.push(OpRecord {
                proc: ProcessId::WRITER,
                kind: OpRecordKind::Write { k: i as u64 + 1, u: Value::text(&format!("v{}", i + 1)) },
                invoke_step: inv,
                respond_step: resp,
                honest: true,
            });
        }
        let mut c = code;
        for (j, &(inv, resp)) in spans.iter().enumerate().skip(w) {
            let pick = c % choices;
            c /= choices;
            let (ret, idx) = if pick == w + 1 {
                (ReadReturn::Bottom, ReadIndex::Bottom)
            } else {
                let u = if pick == 0 { Value::empty() } else { Value::text(&format!("v{pick}")) };
                (ReadReturn::Value { u }, ReadIndex::Index(pick as u64))
            };
            ops.push(OpRecord {
                proc: ProcessId::reader((j - w) as u32 + 1),
                kind: OpRecordKind::Read { ret: Some(ret), idx: Some(idx) },
                invoke_step: inv,
                respond_step: resp,
                honest: true,
            });
        }
        f(&History { ops, writer: ProcessId::WRITER, writer_honest: true, u0: Value::empty() });
        count += 1;
    }
    count
}
