use std::collections::BTreeMap;

use byzregs::adversary::harness::{actions_of, MARKER};
use byzregs::adversary::*;
use byzregs::checker::{check_property1, History};
use byzregs::model::CellValue;
use byzregs::sim::{Phase, Schedule, WorkloadItem};
use byzregs::{EventKind, FaultModel, ProcessId, ReadReturn, RegId, Scenario, SeqTuple, Sim, Value};
use proptest::prelude::*;

fn layout(name: &str, n: u32) -> byzregs::constructions::Layout {
    Sim::new(Scenario::new(name, n, 0)).unwrap().layout().clone()
}

fn register_steps(steps: &[WriterStep]) -> usize {
    steps.iter().filter(|s| matches!(s.kind, StepKind::Read | StepKind::Write)).count()
}

#[test]
fn naive_gossip_solo_write_is_one_step() {
    let s = record_solo_write("naive-gossip", 3, 1000).unwrap();
    assert_eq!(s.m(), 1);
    assert_eq!(register_steps(&s.steps), 1);
    assert_eq!(s.steps.first().unwrap().kind, StepKind::Invoke);
    assert_eq!(s.steps.last().unwrap().kind, StepKind::Respond);
}

#[test]
fn algo1_solo_write_follows_the_recurrence() {
    // W(2) = 4, W(n) = 2 + 2 W(n-1), computed independently of the crate.
    fn w(n: u32) -> u64 {
        if n == 2 {
            4
        } else {
            2 + 2 * w(n - 1)
        }
    }
    for n in 2..=5 {
        let s = record_solo_write("algo1", n, 100_000).unwrap();
        assert_eq!(s.m(), w(n), "n = {n}");
    }
}

#[test]
fn invisibility_classification() {
    let l = layout("naive-gossip", 3);
    let write = WriterStep { index: 1, kind: StepKind::Write, reg: Some(RegId::new("NG/Rw")) };
    let inv = invisible_to(&write, &l.registers, 3);
    assert_eq!(inv.into_iter().collect::<Vec<_>>(), vec![ProcessId(3)]);
    for kind in [StepKind::Invoke, StepKind::Read, StepKind::Respond] {
        let s = WriterStep { index: 0, kind, reg: Some(RegId::new("NG/Rw")) };
        assert_eq!(invisible_to(&s, &l.registers, 3).len(), 3, "{kind:?}");
    }
}

#[test]
fn every_writer_step_is_invisible_to_someone() {
    for (name, n) in [("naive-gossip", 3), ("algo1", 3), ("algo1", 4), ("algo3", 4)] {
        let l = layout(name, n);
        let s = record_solo_write(name, n, 100_000).unwrap();
        for st in &s.steps {
            assert!(!invisible_to(st, &l.registers, n).is_empty(), "{name} {st:?}");
        }
    }
}

fn witness(r: &AttackReport) -> &Witness {
    match &r.outcome {
        AttackOutcome::ViolationWitness(w) | AttackOutcome::BlockedWitness(w) => w,
        AttackOutcome::Exhausted { reason, .. } => panic!("exhausted: {reason}"),
    }
}

#[test]
fn naive_gossip_yields_a_valid_violation_witness() {
    for n in 3..=5 {
        let r = attack_search("naive-gossip", &AttackConfig::new(n)).unwrap();
        assert_eq!(r.outcome.name(), "ViolationWitness");
        let w = witness(&r);
        assert_eq!(w.stage.label, StageLabel::A0Silent);
        assert!(w.trace.events.len() < 100_000);
        assert_eq!(w.trace.register_steps(ProcessId::WRITER), 0);
        assert!(!w.trace.events.iter().any(|e| e.proc == ProcessId::WRITER));
        let reader = w.stage.reader.unwrap();
        let ret = w
            .trace
            .events
            .iter()
            .find(|e| e.proc == reader && e.kind == EventKind::Respond)
            .and_then(|e| e.ret.clone());
        assert_eq!(ret, Some(ReadReturn::Value { u: Value::text(MARKER) }));
        // Checked again from the events alone, with an honest writer.
        let l = layout("naive-gossip", n);
        let h = History::from_events(&w.trace.events, l.root(), &BTreeMap::new()).unwrap();
        assert!(!check_property1(&h, true).is_pass());
    }
}

#[test]
fn algo1_as_candidate_blocks() {
    let r = attack_search("algo1", &AttackConfig::new(3)).unwrap();
    assert_eq!(r.outcome.name(), "BlockedWitness");
    let w = witness(&r);
    let reader = w.stage.r.or(w.stage.reader).unwrap();
    assert!(!w.trace.events.iter().any(|e| e.proc == reader && e.kind == EventKind::Respond && e.reg.is_none()));
    assert!(matches!(r.log.last().unwrap().result, StageResult::Blocked { .. }));
}

#[test]
fn controls_are_exhausted() {
    for name in ["atomic-1wnr", "algo3"] {
        let r = attack_search(name, &AttackConfig::new(3)).unwrap();
        assert_eq!(r.outcome.name(), "Exhausted", "{name}");
    }
}

#[test]
fn base_stage_reads_the_marker() {
    for name in ["naive-gossip", "atomic-1wnr", "algo3"] {
        let r = attack_search(name, &AttackConfig::new(3)).unwrap();
        let a = r.log.iter().find(|l| l.stage.label == StageLabel::A).unwrap();
        assert_eq!(a.result, StageResult::ReadMarker, "{name}");
        assert_eq!(a.stage.k, r.writer_steps + 1);
    }
}

#[test]
fn stages_keep_z_disjoint() {
    let r = attack_search("algo1", &AttackConfig::new(4)).unwrap();
    for rec in &r.log[1..] {
        let s = &rec.stage;
        let (m, x) = (s.malicious.unwrap(), s.reader.unwrap());
        assert!(!s.z.contains(&m) && !s.z.contains(&x));
        if s.r.is_none() {
            assert_eq!(s.z.len(), 2);
        }
    }
}

#[test]
fn two_readers_is_a_precondition_error() {
    assert!(matches!(attack_search("naive-gossip", &AttackConfig::new(2)), Err(AttackError::TooFewReaders { n: 2 })));
}

#[test]
fn register_rule_is_enforced() {
    let mut cfg = AttackConfig::new(3);
    cfg.rule = Some(RegisterRule::NoFullRegisters);
    assert!(matches!(attack_search("atomic-1wnr", &cfg), Err(AttackError::RuleViolation { .. })));
    cfg.rule = Some(RegisterRule::ReaderFullRegisters);
    let r = attack_search("naive-gossip", &cfg).unwrap();
    assert_eq!(r.outcome.name(), "ViolationWitness");
    assert!(matches!(attack_search("nope", &AttackConfig::new(3)), Err(AttackError::UnknownCandidate(_))));
}

#[test]
fn report_serializes() {
    let r = attack_search("naive-gossip", &AttackConfig::new(3)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["outcome"]["outcome"], "violation_witness");
    assert_eq!(v["log"][0]["stage"]["label"], "S");
}

#[test]
fn replaying_a_foreign_register_is_refused() {
    let mut sc = Scenario::new("naive-gossip", 3, 1);
    let script =
        AdversaryScript::Replay { actions: vec![Action::Write { reg: RegId::new("NG/Rw"), value: CellValue::Bottom }] };
    sc.faults.insert(ProcessId(1), FaultModel::Malicious { script });
    sc.workload.push(WorkloadItem::read(2));
    sc.schedule = Schedule::Phased {
        phases: vec![Phase { proc: ProcessId(1), steps: None }, Phase { proc: ProcessId(2), steps: None }],
    };
    assert!(Sim::new(sc).and_then(|s| s.run()).is_err());
}

fn gossip_actions(n: u32) -> impl Strategy<Value = Vec<Action>> {
    let one = (2..=n, any::<bool>(), 0u64..5, "[a-c]{0,2}").prop_map(move |(j, write, k, u)| {
        let reg = RegId::new(format!("NG/G/{j}"));
        if write {
            Action::Write { reg: RegId::new("NG/G/1"), value: CellValue::Plain(SeqTuple::new(k, Value::text(&u))) }
        } else {
            Action::Read { reg }
        }
    });
    prop::collection::vec(one, 0..12)
}

proptest! {
    #[test]
    fn replay_is_byte_identical(actions in gossip_actions(3), first in 0usize..2) {
        let mut sc = Scenario::new("naive-gossip", 3, 0);
        sc.faults.insert(ProcessId(1), FaultModel::Malicious { script: AdversaryScript::Replay { actions: actions.clone() } });
        sc.workload.push(WorkloadItem::write("x"));
        sc.workload.push(WorkloadItem::read(2));
        // The replaying process runs to the end of its script at some point in the run.
        let mut order = vec![ProcessId(0), ProcessId(2)];
        order.insert(first, ProcessId(1));
        sc.schedule = Schedule::Phased { phases: order.into_iter().map(|proc| Phase { proc, steps: None }).collect() };
        let t = Sim::new(sc).unwrap().run().unwrap();
        prop_assert_eq!(actions_of(&t, ProcessId(1)), actions);
    }
}
