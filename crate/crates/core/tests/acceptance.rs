//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use byzregs::adversary::{attack_search, AttackConfig, AttackOutcome};
use byzregs::checker::{
    check_all, check_bottom_returns, check_property1, check_property2, for_each_small_history, oracle_linearize,
    validate_internal_invariants, Budgets, History, ViolationClass,
};
use byzregs::constructions::Layout;
use byzregs::model::{CellValue, ProcessId, RegId, SeqTuple, Signature, Token, Value};
use byzregs::sim::{Scenario, Sim, WorkloadItem};
use byzregs::sweep::{sweep, FaultPattern, RunResult, SweepConfig};
use byzregs::trace::{EventKind, OpKind, OpStatus, ReadReturn, Trace};

const SEEDS: u64 = 1000;
const TARGET_RUNS: u64 = 10_000;
const C1_LIMIT: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn count(results: &[RunResult], classes: &[ViolationClass]) -> usize {
    results.iter().flat_map(|r| r.violations()).filter(|c| classes.contains(c)).count()
}

const PROPERTIES: [ViolationClass; 3] =
    [ViolationClass::Property1, ViolationClass::Property2, ViolationClass::BottomReturn];

/// Runs `target` runs (rounded up to fill every cell) over `ns` x `patterns`.
fn sweep_about(construction: &str, ns: Vec<u32>, patterns: &[FaultPattern], seed: u64, target: u64) -> Vec<RunResult> {
    let cells = (ns.len() * patterns.len()) as u64;
    let cfg = SweepConfig::new(construction, ns, seed, target.div_ceil(cells), patterns.to_vec());
    sweep(&cfg).expect("sweep runs")
}

fn criterion1(c1: &[RunResult], took: Duration) -> Outcome {
    let bad = count(c1, &PROPERTIES);
    outcome(
        bad == 0 && took < C1_LIMIT,
        format!(
            "algo1 n=2..5, {} runs: {bad} Property1/Property2/BottomReturn violations, {:.1}s",
            c1.len(),
            took.as_secs_f64()
        ),
    )
}

fn wait_free_ok(r: &RunResult) -> bool {
    r.report.verdicts.iter().any(|v| v.class == ViolationClass::WaitFreedom && v.is_pass() && !v.outside_guarantee)
        && r.report.inconclusive.is_empty()
}

fn criterion2(c1: &[RunResult], extra: &[RunResult]) -> Outcome {
    let guaranteed: Vec<&RunResult> = c1.iter().chain(extra).filter(|r| r.guaranteed).collect();
    let bad = guaranteed.iter().filter(|r| !wait_free_ok(r)).count();
    let ops: usize = guaranteed.iter().map(|r| r.completed.len()).sum();
    outcome(
        bad == 0 && !guaranteed.is_empty(),
        format!(
            "{} runs inside the condition, {ops} honest ops completed, {bad} runs with pending ops",
            guaranteed.len()
        ),
    )
}

fn scenario_file(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).expect("scenario file")).expect("scenario json")
}

fn execute(sc: &Scenario) -> (Trace, Layout) {
    let sim = Sim::new(sc.clone()).expect("scenario builds");
    let layout = sim.layout().clone();
    (sim.run().expect("scenario runs"), layout)
}

fn criterion3(invariants_ok: &mut bool) -> Outcome {
    let sc = scenario_file("blocking_boundary.json");
    let (a, layout) = execute(&sc);
    let (b, _) = execute(&sc);
    let report = check_all(&a, &layout, &sc.faults, Budgets::of(&sc)).expect("checks run");
    *invariants_ok &= validate_internal_invariants(&a, &layout, &sc.faults).is_pass();
    let wf = report.verdicts.iter().find(|v| v.class == ViolationClass::WaitFreedom);
    let pending_reader =
        sc.workload.iter().zip(&a.outcome.ops).any(|(w, s)| *s == OpStatus::Pending && sc.fault(w.proc).is_correct());
    let outside = wf
        .is_some_and(|v| v.is_pass() && v.outside_guarantee && v.explanation.starts_with("pending outside guarantee"));
    let same = a.to_jsonl() == b.to_jsonl();
    outcome(
        outside && pending_reader && same && report.all_pass(),
        format!(
            "blocking_boundary.json: correct reader pending={pending_reader}, verdict outside guarantee={outside}, deterministic={same}"
        ),
    )
}

fn criterion4(c4: &[RunResult]) -> Outcome {
    let bad = count(c4, &PROPERTIES);
    let pending = c4.iter().filter(|r| !wait_free_ok(r)).count();
    outcome(
        bad == 0 && pending == 0,
        format!(
            "algo2 n=2, {} runs over {} patterns: {bad} property violations, {pending} runs with pending ops",
            c4.len(),
            FaultPattern::ALL.len()
        ),
    )
}

fn criterion5(c5: &[RunResult]) -> Outcome {
    let bad = count(c5, &PROPERTIES);
    let mut off = 0;
    let mut ops = 0;
    for r in c5 {
        for op in &r.completed {
            ops += 1;
            let want = match op.op {
                OpKind::Read => 2 * u64::from(r.n) + 1,
                OpKind::Write => u64::from(r.n),
            };
            off += usize::from(op.register_steps != want);
        }
    }
    let pending = c5.iter().filter(|r| !wait_free_ok(r)).count();
    outcome(
        bad == 0 && off == 0 && pending == 0,
        format!("algo3 n=2..5, {} runs: {bad} property violations, {off}/{ops} honest ops off the exact step count, {pending} runs with pending ops", c5.len()),
    )
}

fn criterion6() -> Outcome {
    let (mut total, mut agree) = (0usize, 0usize);
    let none = BTreeMap::new();
    let stats = for_each_small_history(2, 4, |h: &History| {
        if h.ops.len() > 6 {
            return;
        }
        total += 1;
        let checks = check_property1(h, true).is_pass()
            && check_property2(h, true).is_pass()
            && check_bottom_returns(h, &none).is_pass();
        agree += usize::from(oracle_linearize(h).expect("within cap") == checks);
    });
    outcome(
        total > 0 && agree == total,
        format!("{agree}/{total} histories agree ({} precedence patterns)", stats.patterns),
    )
}

fn run_plain(sc: Scenario) -> (Trace, Layout, Scenario) {
    let (t, l) = execute(&sc);
    (t, l, sc)
}

fn writes_to<'a>(t: &'a Trace, reg: &'a str) -> impl Iterator<Item = usize> + 'a {
    t.events
        .iter()
        .enumerate()
        .filter(move |(_, e)| e.kind == EventKind::RegWrite && e.reg.as_ref().map(RegId::as_str) == Some(reg))
        .map(|(i, _)| i)
}

fn swap(t: &mut Trace, a: usize, b: usize) {
    let (va, vb) = (t.events[a].value.clone(), t.events[b].value.clone());
    t.events[a].value = vb;
    t.events[b].value = va;
}

/// The three hand-built mutations; returns how many the validator rejects
/// while accepting the unmutated originals.
fn mutations_caught() -> usize {
    let mut caught = 0;
    let valid = |t: &Trace, l: &Layout, s: &Scenario| validate_internal_invariants(t, l, &s.faults).is_pass();

    let mut s = Scenario::new("algo1", 2, 3);
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::write("b")];
    let (mut t, l, s) = run_plain(s);
    let commits: Vec<usize> =
        writes_to(&t, "I2/Rwp").filter(|&i| matches!(t.events[i].value, Some(CellValue::Commit(_)))).collect();
    if valid(&t, &l, &s) && commits.len() == 2 {
        swap(&mut t, commits[0], commits[1]);
        caught += usize::from(!valid(&t, &l, &s));
    }

    let mut s = Scenario::new("algo1", 2, 3);
    s.workload = vec![
        WorkloadItem::write("a"),
        WorkloadItem::read(1).after(0),
        WorkloadItem::write("b").after(1),
        WorkloadItem::read(1).after(2),
    ];
    let (mut t, l, s) = run_plain(s);
    let rpq: Vec<usize> = writes_to(&t, "I2/RpQ").collect();
    if valid(&t, &l, &s) && rpq.len() == 2 {
        swap(&mut t, rpq[0], rpq[1]);
        caught += usize::from(!valid(&t, &l, &s));
    }

    let mut s = Scenario::new("algo3", 2, 3);
    s.workload = vec![WorkloadItem::write("a"), WorkloadItem::read(1).after(0)];
    let (mut t, l, s) = run_plain(s);
    if valid(&t, &l, &s) {
        let bogus =
            Signature { tuple: SeqTuple::new(5, Value::text("z")), signer: ProcessId::WRITER, token: Token(999) };
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
        caught += usize::from(!valid(&t, &l, &s));
    }
    caught
}

fn criterion7(all: &[&[RunResult]], blocking_ok: bool) -> Outcome {
    let runs: usize = all.iter().map(|r| r.len()).sum();
    let bad: usize = all.iter().map(|r| count(r, &[ViolationClass::InternalInvariant])).sum();
    let caught = mutations_caught();
    outcome(
        bad == 0 && blocking_ok && caught == 3,
        format!("{runs} sweep traces + blocking scenario: {bad} invariant failures; mutations rejected: {caught}/3"),
    )
}

fn criterion8() -> Outcome {
    let cfg = AttackConfig::new(3);
    let mut notes = Vec::new();
    let mut pass = true;
    match attack_search("naive-gossip", &cfg) {
        Ok(r) => match &r.outcome {
            AttackOutcome::ViolationWitness(w) => {
                let steps = w.trace.events.len();
                let writer_steps = w.trace.register_steps(ProcessId::WRITER);
                let marker = Value::text("1");
                let honest_marker = w.trace.events.iter().any(|e| {
                    e.kind == EventKind::Respond
                        && e.reg.is_none()
                        && e.proc != ProcessId::WRITER
                        && e.ret.as_ref().and_then(ReadReturn::value) == Some(&marker)
                });
                let layout = Sim::new(Scenario::new("naive-gossip", 3, 0)).expect("builds").layout().clone();
                let h = History::from_events(&w.trace.events, layout.root(), &BTreeMap::new()).expect("history");
                let p1_fails = !check_property1(&h, true).is_pass();
                pass &= steps <= 100_000 && writer_steps == 0 && honest_marker && p1_fails;
                notes.push(format!(
                    "naive-gossip ViolationWitness ({steps} steps, {writer_steps} writer steps, marker read={honest_marker}, Property1 fails={p1_fails})"
                ));
            }
            other => {
                pass = false;
                notes.push(format!("naive-gossip {}", other.name()));
            }
        },
        Err(e) => {
            pass = false;
            notes.push(format!("naive-gossip error: {e}"));
        }
    }
    for (name, want) in [("algo1", "BlockedWitness"), ("atomic-1wnr", "Exhausted")] {
        match attack_search(name, &cfg) {
            Ok(r) => {
                pass &= r.outcome.name() == want;
                notes.push(format!("{name} {}", r.outcome.name()));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("{name} error: {e}"));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn main() -> ExitCode {
    let canonical4 = [
        FaultPattern::AllCorrect,
        FaultPattern::WriterCrash,
        FaultPattern::OneMaliciousReader,
        FaultPattern::AllReadersMalicious,
    ];
    let mut lines = Vec::new();

    let t0 = Instant::now();
    let cfg = SweepConfig::new("algo1", vec![2, 3, 4, 5], 0, SEEDS, canonical4.to_vec());
    let c1 = sweep(&cfg).expect("sweep runs");
    let took = t0.elapsed();
    lines.push(("1", criterion1(&c1, took)));

    let boundary = sweep_about("algo1", vec![2, 3, 4, 5], &[FaultPattern::WriterCrashOneMaliciousReader], 0, 4 * SEEDS);
    lines.push(("2", criterion2(&c1, &boundary)));

    let mut blocking_ok = true;
    lines.push(("3", criterion3(&mut blocking_ok)));

    let c4 = sweep_about("algo2", vec![2], &FaultPattern::ALL, 0, TARGET_RUNS);
    lines.push(("4", criterion4(&c4)));

    let c5 = sweep_about("algo3", vec![2, 3, 4, 5], &FaultPattern::ALL, 0, TARGET_RUNS);
    lines.push(("5", criterion5(&c5)));

    lines.push(("6", criterion6()));
    lines.push(("7", criterion7(&[&c1, &boundary, &c4, &c5], blocking_ok)));
    lines.push(("8", criterion8()));

    let mut failed = 0;
    for (id, o) in &lines {
        println!("{} criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria pass", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
