use std::collections::HashSet;

use super::history::{History, OpRecord, ReadIndex};
use super::CheckError;

pub const ORACLE_CAP: usize = 8;

/// Brute-force search for a sequential SWMR order of the honest operations
/// that extends precedence. Pending writes may be left out; pending reads
/// are ignored.
pub fn oracle_linearize(h: &History) -> Result<bool, CheckError> {
    if !h.writer_honest {
        return Ok(true);
    }
    let ops: Vec<&OpRecord> = h.ops.iter().filter(|o| o.honest && (o.is_write() || o.completed())).collect();
    if ops.len() > ORACLE_CAP {
        return Err(CheckError::TooLarge { ops: ops.len(), cap: ORACLE_CAP });
    }
    let mut wanted = Vec::with_capacity(ops.len());
    for o in &ops {
        match o.read_index() {
            Some(ReadIndex::Index(k)) => wanted.push(Some(k)),
            Some(_) => return Ok(false),
            None => wanted.push(None),
        }
    }
    let optional: u32 = ops.iter().enumerate().filter(|(_, o)| !o.completed()).fold(0, |m, (i, _)| m | 1 << i);
    let mut search = Search { ops: &ops, wanted: &wanted, optional, seen: HashSet::new() };
    Ok(search.dfs(0, 0))
}

struct Search<'a> {
    ops: &'a [&'a OpRecord],
    /// The index each read must observe; `None` for writes.
    wanted: &'a [Option<u64>],
    optional: u32,
    seen: HashSet<(u32, u64)>,
}

impl Search<'_> {
    fn dfs(&mut self, placed: u32, current: u64) -> bool {
        let all = (1u32 << self.ops.len()) - 1;
        if placed | self.optional == all {
            return true;
        }
        if !self.seen.insert((placed, current)) {
            return false;
        }
        for i in 0..self.ops.len() {
            if placed & 1 << i != 0 {
                continue;
            }
            let blocked = (0..self.ops.len()).any(|j| {
                j != i && placed & 1 << j == 0 && self.optional & 1 << j == 0 && self.ops[j].precedes(self.ops[i])
            });
            if blocked {
                continue;
            }
            let next = match (self.wanted[i], self.ops[i].write_k()) {
                (Some(k), _) if k != current => continue,
                (Some(_), _) => current,
                (None, Some(k)) => k,
                (None, None) => unreachable!("reads always carry a wanted index"),
            };
            if self.dfs(placed | 1 << i, next) {
                return true;
            }
        }
        false
    }
}
