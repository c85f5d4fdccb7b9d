use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ProcessId;

/// Default bound on consecutive resumptions granted to one unit in a round,
/// times two: a runnable unit is served within `FAIRNESS * runnable` picks.
pub const FAIRNESS: usize = 4;

/// Where schedule decisions come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Seeded {
        seed: u64,
    },
    /// Explicit picks; continues seeded (and therefore fair) if `then_seed` is set.
    Scripted {
        picks: Vec<Pick>,
        #[serde(default)]
        then_seed: Option<u64>,
    },
    /// Always serves the earliest listed process that can move; its own
    /// threads are served round-robin. Not fair.
    Priority {
        order: Vec<ProcessId>,
    },
    /// Serves one process at a time, in the listed order. A phase ends after
    /// `steps` picks, or once its process has nothing runnable. Not fair.
    Phased {
        phases: Vec<Phase>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub proc: ProcessId,
    #[serde(default)]
    pub steps: Option<u64>,
}

impl Schedule {
    pub fn is_fair(&self) -> bool {
        match self {
            Schedule::Seeded { .. } => true,
            Schedule::Scripted { then_seed, .. } => then_seed.is_some(),
            Schedule::Priority { .. } | Schedule::Phased { .. } => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    pub proc: ProcessId,
    /// `None` selects the process's invocation if one is due, else its lowest runnable thread.
    #[serde(default)]
    pub thread: Option<u32>,
}

/// A schedulable unit: a thread with a pending register access, or the
/// invocation of a process's next operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum Unit {
    Invoke { proc: ProcessId },
    Thread { proc: ProcessId, thread: u32 },
}

impl Unit {
    pub fn proc(&self) -> ProcessId {
        match *self {
            Unit::Invoke { proc } | Unit::Thread { proc, .. } => proc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PickError {
    Invalid(Pick),
}

/// Weighted round-robin over a seeded shuffle. Each round shuffles the
/// runnable units and grants each one or two consecutive resumptions.
pub struct SeededPicker {
    rng: ChaCha8Rng,
    round: VecDeque<(Unit, u8)>,
    burst: Option<(Unit, u8)>,
}

impl SeededPicker {
    pub fn new(seed: u64) -> SeededPicker {
        SeededPicker { rng: ChaCha8Rng::seed_from_u64(seed), round: VecDeque::new(), burst: None }
    }

    /// `runnable` must be sorted and non-empty.
    pub fn pick(&mut self, runnable: &[Unit]) -> Unit {
        assert!(!runnable.is_empty(), "pick from an empty runnable set");
        if let Some((u, left)) = self.burst.take() {
            if left > 0 && runnable.binary_search(&u).is_ok() {
                self.burst = Some((u, left - 1));
                return u;
            }
        }
        loop {
            while let Some((u, weight)) = self.round.pop_front() {
                if runnable.binary_search(&u).is_ok() {
                    self.burst = Some((u, weight - 1));
                    return u;
                }
            }
            let mut units = runnable.to_vec();
            units.shuffle(&mut self.rng);
            for u in units {
                let weight = self.rng.gen_range(1..=2u8);
                self.round.push_back((u, weight));
            }
        }
    }
}

pub(crate) enum Picker {
    Seeded(SeededPicker),
    Scripted { picks: VecDeque<Pick>, then: Option<SeededPicker> },
    Priority { order: Vec<ProcessId>, last: HashMap<ProcessId, Unit> },
    Phased { phases: VecDeque<Phase>, taken: u64, last: Option<Unit> },
}

impl Picker {
    pub fn new(s: &Schedule) -> Picker {
        match s {
            Schedule::Seeded { seed } => Picker::Seeded(SeededPicker::new(*seed)),
            Schedule::Scripted { picks, then_seed } => {
                Picker::Scripted { picks: picks.iter().copied().collect(), then: then_seed.map(SeededPicker::new) }
            }
            Schedule::Priority { order } => Picker::Priority { order: order.clone(), last: HashMap::new() },
            Schedule::Phased { phases } => {
                Picker::Phased { phases: phases.iter().copied().collect(), taken: 0, last: None }
            }
        }
    }

    /// `Ok(None)` means a scripted schedule ran out of picks.
    pub fn pick(&mut self, runnable: &[Unit]) -> Result<Option<Unit>, PickError> {
        match self {
            Picker::Seeded(p) => Ok(Some(p.pick(runnable))),
            Picker::Scripted { picks, then } => match picks.pop_front() {
                Some(pick) => resolve_pick(pick, runnable).map(Some),
                None => Ok(then.as_mut().map(|p| p.pick(runnable))),
            },
            Picker::Priority { order, last } => {
                let proc = order
                    .iter()
                    .copied()
                    .find(|p| runnable.iter().any(|u| u.proc() == *p))
                    .unwrap_or_else(|| runnable[0].proc());
                let mine: Vec<Unit> = runnable.iter().copied().filter(|u| u.proc() == proc).collect();
                let next = match last.get(&proc) {
                    Some(prev) => mine.iter().copied().find(|u| u > prev).unwrap_or(mine[0]),
                    None => mine[0],
                };
                last.insert(proc, next);
                Ok(Some(next))
            }
            Picker::Phased { phases, taken, last } => loop {
                let Some(ph) = phases.front().copied() else { return Ok(None) };
                let mine: Vec<Unit> = runnable.iter().copied().filter(|u| u.proc() == ph.proc).collect();
                if mine.is_empty() || ph.steps.is_some_and(|s| *taken >= s) {
                    phases.pop_front();
                    *taken = 0;
                    *last = None;
                    continue;
                }
                let next = match *last {
                    Some(prev) => mine.iter().copied().find(|u| *u > prev).unwrap_or(mine[0]),
                    None => mine[0],
                };
                *taken += 1;
                *last = Some(next);
                return Ok(Some(next));
            },
        }
    }
}

fn resolve_pick(pick: Pick, runnable: &[Unit]) -> Result<Unit, PickError> {
    let found = match pick.thread {
        Some(thread) => {
            let u = Unit::Thread { proc: pick.proc, thread };
            runnable.binary_search(&u).ok().map(|_| u)
        }
        None => runnable.iter().copied().find(|u| u.proc() == pick.proc),
    };
    found.ok_or(PickError::Invalid(pick))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(p: u32, th: u32) -> Unit {
        Unit::Thread { proc: ProcessId(p), thread: th }
    }

    #[test]
    fn seeded_is_deterministic() {
        let units = vec![t(0, 0), t(1, 0), t(2, 0), t(2, 1)];
        let run = |seed| {
            let mut p = SeededPicker::new(seed);
            (0..50).map(|_| p.pick(&units)).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn priority_round_robins_own_threads() {
        let mut p = Picker::new(&Schedule::Priority { order: vec![ProcessId(2)] });
        let units = vec![t(0, 0), t(2, 1), t(2, 2)];
        let picks: Vec<_> = (0..4).map(|_| p.pick(&units).unwrap().unwrap()).collect();
        assert_eq!(picks, vec![t(2, 1), t(2, 2), t(2, 1), t(2, 2)]);
    }

    #[test]
    fn phased_serves_phases_in_order() {
        let phases = vec![
            Phase { proc: ProcessId(1), steps: Some(1) },
            Phase { proc: ProcessId(2), steps: None },
            Phase { proc: ProcessId(0), steps: None },
        ];
        let mut p = Picker::new(&Schedule::Phased { phases });
        let units = vec![t(0, 0), t(1, 0), t(2, 1), t(2, 2)];
        let picks: Vec<_> = (0..4).map(|_| p.pick(&units).unwrap().unwrap()).collect();
        assert_eq!(picks, vec![t(1, 0), t(2, 1), t(2, 2), t(2, 1)]);
        assert_eq!(p.pick(&[t(0, 0), t(1, 0)]).unwrap(), Some(t(0, 0)));
        assert_eq!(p.pick(&[t(1, 0)]).unwrap(), None);
    }

    #[test]
    fn scripted_rejects_unrunnable_pick() {
        let bad = Pick { proc: ProcessId(1), thread: Some(3) };
        let mut p = Picker::new(&Schedule::Scripted { picks: vec![bad], then_seed: None });
        assert_eq!(p.pick(&[t(1, 0)]), Err(PickError::Invalid(bad)));
        assert_eq!(p.pick(&[t(1, 0)]), Ok(None));
    }
}
