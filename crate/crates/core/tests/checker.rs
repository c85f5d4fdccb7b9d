use std::collections::BTreeMap;

use byzregs::adversary::AdversaryScript;
use byzregs::checker::{
    check_all, check_bottom_returns, check_property1, check_property2, check_wait_freedom, for_each_small_history,
    invariant_violations, oracle_linearize, Budgets, CheckError, History, HistoryError, InvariantRule, OpRecord,
    OpRecordKind, ReadIndex, Status, ViolationClass,
};
use byzregs::model::{CellValue, FaultModel, ProcessId, RegId, SeqTuple, Signature, Token, Value};
use byzregs::sim::{Pick, Scenario, Schedule, Sim, WorkloadItem};
use byzregs::trace::{EventKind, ReadReturn, Trace};

fn write(k: u64, inv: u64, resp: Option<u64>) -> OpRecord {
    OpRecord {
        proc: ProcessId::WRITER,
        kind: OpRecordKind::Write { k, u: Value::text(&format!("a{k}")) },
        invoke_step: inv,
        respond_step: resp,
        honest: true,
    }
}

fn read(reader: u32, k: u64, inv: u64, resp: u64) -> OpRecord {
    let u = if k == 0 { Value::empty() } else { Value::text(&format!("a{k}")) };
    OpRecord {
        proc: ProcessId(reader),
        kind: OpRecordKind::Read { ret: Some(ReadReturn::Tuple(SeqTuple::new(k, u))), idx: Some(ReadIndex::Index(k)) },
        invoke_step: inv,
        respond_step: Some(resp),
        honest: true,
    }
}

fn bottom_read(reader: u32, inv: u64, resp: u64) -> OpRecord {
    OpRecord {
        proc: ProcessId(reader),
        kind: OpRecordKind::Read { ret: Some(ReadReturn::Bottom), idx: Some(ReadIndex::Bottom) },
        invoke_step: inv,
        respond_step: Some(resp),
        honest: true,
    }
}

fn hist(ops: Vec<OpRecord>) -> History {
    History { ops, writer: ProcessId::WRITER, writer_honest: true, u0: Value::empty() }
}

fn no_faults() -> BTreeMap<ProcessId, FaultModel> {
    BTreeMap::new()
}

#[test]
fn property1_examples() {
    let fresh = hist(vec![write(1, 0, Some(1)), read(1, 1, 2, 3)]);
    assert!(check_property1(&fresh, true).is_pass());

    let stale = hist(vec![write(1, 0, Some(1)), read(1, 0, 2, 3)]);
    let v = check_property1(&stale, true);
    assert_eq!(v.status, Status::Violation);
    assert_eq!(v.class, ViolationClass::Property1);
    assert!(!v.witnesses.is_empty());

    let concurrent = hist(vec![write(1, 0, Some(1)), write(2, 2, Some(5)), read(1, 2, 3, 4)]);
    assert!(check_property1(&concurrent, true).is_pass());
}

#[test]
fn property2_examples() {
    let ordered = hist(vec![write(1, 0, Some(1)), write(2, 2, Some(9)), read(1, 1, 3, 4), read(2, 2, 5, 6)]);
    assert!(check_property2(&ordered, true).is_pass());

    let inverted = hist(vec![write(1, 0, Some(1)), write(2, 2, Some(9)), read(1, 2, 3, 4), read(2, 1, 5, 6)]);
    let v = check_property2(&inverted, true);
    assert_eq!(v.status, Status::Violation);
    assert_eq!(v.witnesses, vec![3, 4, 5, 6]);

    let overlapping = hist(vec![write(1, 0, Some(1)), write(2, 2, Some(9)), read(1, 2, 3, 6), read(2, 1, 4, 5)]);
    assert!(check_property2(&overlapping, true).is_pass());
}

#[test]
fn bottom_examples() {
    let h = hist(vec![bottom_read(1, 0, 1)]);
    assert!(!check_bottom_returns(&h, &no_faults()).is_pass());
    let mut malicious_writer = no_faults();
    malicious_writer.insert(ProcessId::WRITER, FaultModel::Malicious { script: AdversaryScript::Idle });
    assert!(check_bottom_returns(&h, &malicious_writer).is_pass());
    assert!(check_bottom_returns(&hist(vec![read(1, 0, 0, 1)]), &no_faults()).is_pass());
}

#[test]
fn malicious_writer_makes_properties_vacuous() {
    let inverted =
        hist(vec![write(1, 0, Some(1)), write(2, 2, Some(9)), read(1, 2, 3, 4), read(2, 1, 5, 6), read(3, 7, 10, 11)]);
    assert!(check_property1(&inverted, false).is_pass());
    assert!(check_property2(&inverted, false).is_pass());
    let mut h = inverted;
    h.writer_honest = false;
    assert!(oracle_linearize(&h).unwrap());
}

#[test]
fn oracle_examples() {
    assert!(oracle_linearize(&hist(vec![])).unwrap());
    let inverted = hist(vec![write(1, 0, Some(1)), write(2, 2, Some(9)), read(1, 2, 3, 4), read(2, 1, 5, 6)]);
    assert!(!oracle_linearize(&inverted).unwrap());
    let concurrent = hist(vec![write(1, 0, Some(3)), read(1, 1, 1, 2)]);
    assert!(oracle_linearize(&concurrent).unwrap());
    let pending = hist(vec![write(1, 0, None), read(1, 0, 1, 2), read(2, 1, 3, 4)]);
    assert!(oracle_linearize(&pending).unwrap());
}

#[test]
fn oracle_refuses_large_histories() {
    let ops = (0..9).map(|i| read(1, 0, 2 * i, 2 * i + 1)).collect();
    assert!(matches!(oracle_linearize(&hist(ops)), Err(CheckError::TooLarge { ops: 9, cap: 8 })));
}

#[test]
fn witnesses_alone_violate_the_property() {
    let mut checked = 0;
    for_each_small_history(2, 3, |h| {
        for check in [check_property1, check_property2] {
            let v = check(h, true);
            if v.is_pass() {
                continue;
            }
            checked += 1;
            let sub = h.restrict(&v.witnesses);
            assert!(!check(&sub, true).is_pass(), "witness {:?} of {h:?} is not a violation on its own", v.witnesses);
        }
    });
    assert!(checked > 1000);
}

#[test]
fn restricted_read_without_response_is_pending() {
    let h = hist(vec![write(1, 0, Some(1)), read(1, 0, 2, 3)]);
    let sub = h.restrict(&[0, 1, 2]);
    assert_eq!(sub.ops[1].read_index(), None);
    assert!(check_property1(&sub, true).is_pass());
}

fn run(s: Scenario) -> (Trace, byzregs::constructions::Layout, Scenario) {
    let sim = Sim::new(s.clone()).unwrap();
    let layout = sim.layout().clone();
    (sim.run().unwrap(), layout, s)
}

fn all_correct(construction: &str, n: u32, seed: u64) -> Scenario {
    let mut s = Scenario::new(construction, n, seed);
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::write("b")];
    for r in 1..=n.min(4) {
        s.workload.push(WorkloadItem::read(r));
    }
    s
}

#[test]
fn all_correct_runs_pass_every_check() {
    for (c, ns) in [("algo1", 2..=5), ("algo2", 2..=2), ("algo3", 2..=5)] {
        for n in ns {
            for seed in 0..25 {
                let (t, layout, s) = run(all_correct(c, n, seed));
                let report = check_all(&t, &layout, &s.faults, Budgets::of(&s)).unwrap();
                assert!(report.all_pass(), "{c} n={n} seed={seed}: {:?}", report.violations().collect::<Vec<_>>());
                assert!(report.inconclusive.is_empty());
            }
        }
    }
}

#[test]
fn malformed_history_is_reported() {
    let (mut t, layout, _) = run(all_correct("algo1", 2, 0));
    let first_invoke = t.events.iter().position(|e| e.kind == EventKind::Invoke && e.reg.is_none()).unwrap();
    t.events.remove(first_invoke);
    let err = History::from_events(&t.events, layout.root(), &no_faults()).unwrap_err();
    assert!(matches!(err, HistoryError::MalformedHistory { .. }));
}

fn rules(
    t: &Trace,
    layout: &byzregs::constructions::Layout,
    faults: &BTreeMap<ProcessId, FaultModel>,
) -> Vec<InvariantRule> {
    invariant_violations(&t.events, layout, faults).into_iter().map(|v| v.rule).collect()
}

#[test]
fn commit_order_inversion_is_caught() {
    let mut s = Scenario::new("algo1", 2, 3);
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::write("b")];
    let (mut t, layout, s) = run(s);
    assert!(rules(&t, &layout, &s.faults).is_empty());
    let commits: Vec<usize> = t
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EventKind::RegWrite && e.reg.as_ref().map(RegId::as_str) == Some("I2/Rwp"))
        .filter(|(_, e)| matches!(e.value, Some(CellValue::Commit(_))))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(commits.len(), 2);
    let (a, b) = (t.events[commits[0]].value.clone(), t.events[commits[1]].value.clone());
    t.events[commits[0]].value = b;
    t.events[commits[1]].value = a;
    assert!(rules(&t, &layout, &s.faults).contains(&InvariantRule::WriterMonotone));
    assert!(!byzregs::checker::validate_internal_invariants(&t, &layout, &s.faults).is_pass());
}

#[test]
fn rpq_monotonicity_break_is_caught() {
    let mut s = Scenario::new("algo1", 2, 3);
    s.workload = vec![
        WorkloadItem::write("a"),
        WorkloadItem::read(1).after(0),
        WorkloadItem::write("b").after(1),
        WorkloadItem::read(1).after(2),
    ];
    let (mut t, layout, s) = run(s);
    assert!(rules(&t, &layout, &s.faults).is_empty());
    let rpq: Vec<usize> = t
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EventKind::RegWrite && e.reg.as_ref().map(RegId::as_str) == Some("I2/RpQ"))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(rpq.len(), 2);
    let (a, b) = (t.events[rpq[0]].value.clone(), t.events[rpq[1]].value.clone());
    t.events[rpq[0]].value = b;
    t.events[rpq[1]].value = a;
    assert!(rules(&t, &layout, &s.faults).contains(&InvariantRule::RpqMonotone));
}

#[test]
fn accepting_an_invalid_signature_is_caught() {
    let mut s = Scenario::new("algo3", 2, 3);
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::read(1).after(0)];
    let (mut t, layout, s) = run(s);
    assert!(rules(&t, &layout, &s.faults).is_empty());
    let bogus = Signature { tuple: SeqTuple::new(5, Value::text("z")), signer: ProcessId::WRITER, token: Token(999) };
    for e in t.events.iter_mut().filter(|e| e.proc == ProcessId(1)) {
        match e.kind {
            EventKind::RegRead if e.reg.as_ref().map(RegId::as_str) == Some("S2/R/0-1") => {
                e.value = Some(CellValue::Signed(bogus.clone()));
            }
            EventKind::RegWrite => e.value = Some(CellValue::Signed(bogus.clone())),
            EventKind::Respond => e.ret = Some(ReadReturn::Tuple(bogus.tuple.clone())),
            _ => {}
        }
    }
    let found = rules(&t, &layout, &s.faults);
    assert!(found.contains(&InvariantRule::SignatureValidity), "{found:?}");
    assert!(found.contains(&InvariantRule::SignedReadMax), "{found:?}");
}

#[test]
fn algo3_malicious_writer_reads_complete() {
    let mut s = Scenario::new("algo3", 3, 8);
    s.faults.insert(
        ProcessId::WRITER,
        FaultModel::Malicious {
            script: AdversaryScript::SignedLie { reg: RegId::new("S3/R/0-2"), k: 7, u: Value::text("x") },
        },
    );
    s.workload = vec![WorkloadItem::read(1), WorkloadItem::read(2), WorkloadItem::read(3)];
    let (t, _, s) = run(s);
    let v = check_wait_freedom(&t, &s.faults, Budgets::of(&s)).unwrap();
    assert!(v.is_pass() && !v.outside_guarantee);
}

#[test]
fn pending_read_under_correct_writer_is_a_violation() {
    let mut s = Scenario::new("algo1", 3, 4);
    s.per_op_budget = 3;
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::read(3)];
    let (t, _, s) = run(s);
    let v = check_wait_freedom(&t, &s.faults, Budgets::of(&s)).unwrap();
    assert_eq!(v.status, Status::Violation);
    assert_eq!(v.class, ViolationClass::WaitFreedom);
    assert!(v.explanation.contains("pending at step budget"));
}

#[test]
fn unfair_schedule_is_inconclusive() {
    let mut s = Scenario::new("algo1", 2, 0);
    s.workload = vec![WorkloadItem::read(2)];
    s.schedule = Schedule::Scripted { picks: vec![Pick { proc: ProcessId(2), thread: None }], then_seed: None };
    let (t, layout, s) = run(s);
    let err = check_wait_freedom(&t, &s.faults, Budgets::of(&s)).unwrap_err();
    assert_eq!(err, CheckError::UnfairSchedule { pending: 1 });
    let report = check_all(&t, &layout, &s.faults, Budgets::of(&s)).unwrap();
    assert_eq!(report.inconclusive.len(), 1);
}

#[test]
fn verdict_json_shape() {
    let v = check_property1(&hist(vec![write(1, 0, Some(1)), read(1, 0, 2, 3)]), true);
    let json: serde_json::Value = serde_json::to_value(&v).unwrap();
    assert_eq!(json["status"], "violation");
    assert_eq!(json["class"], "Property1");
    assert_eq!(json["witnesses"], serde_json::json!([0, 1, 2, 3]));
    assert!(json["explanation"].is_string());
}

#[test]
fn checks_agree_with_oracle_up_to_five_ops() {
    let stats = for_each_small_history(2, 3, |h| {
        let checks = check_property1(h, true).is_pass()
            && check_property2(h, true).is_pass()
            && check_bottom_returns(h, &no_faults()).is_pass();
        assert_eq!(checks, oracle_linearize(h).unwrap(), "{h:?}");
    });
    assert!(stats.histories > 10_000);
}
