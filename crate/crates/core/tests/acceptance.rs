//! Acceptance run: one line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as failing without failing
//! the target; every other failure exits non-zero.

mod common;

use std::time::{Duration, Instant};

use larsm::async_la::LaConfig;
use larsm::checker::linearizability::check_linearizability;
use larsm::gla::Truncation;
use larsm::harness::scenario::{random_faults, FaultKind, Protocol, Scenario, TraceLevel};
use larsm::harness::sweep::{sweep, SweepParam};
use larsm::harness::trace::TraceEvent;
use larsm::harness::{run, RunOutput};
use larsm::lattice::Lattice;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as stated; the reasons are in the README.
const KNOWN_RED: &[u32] = &[4];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fault_rng(tag: u64, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tag << 32 | seed)
}

/// Decisions recomputed from the trace: inputs and outputs as bitmasks.
fn la_decisions(out: &RunOutput) -> (Vec<u64>, Vec<Option<u64>>, Vec<bool>) {
    let n = out.metrics.n;
    let mask = |atoms: &[u32]| atoms.iter().fold(0u64, |m, a| m | 1 << a);
    let (mut inputs, mut outputs, mut crashed) = (vec![0; n], vec![None; n], vec![false; n]);
    for e in &out.events {
        match e {
            TraceEvent::Input { process, value } => inputs[*process] = mask(value),
            TraceEvent::Decide { process, value, .. } => outputs[*process] = Some(mask(value)),
            TraceEvent::Crash { process, .. } => crashed[*process] = true,
            _ => {}
        }
    }
    (inputs, outputs, crashed)
}

fn la_properties_hold(out: &RunOutput) -> bool {
    let (inputs, outputs, crashed) = la_decisions(out);
    let top = inputs.iter().fold(0, |a, b| a | b);
    let decided: Vec<u64> = outputs.iter().flatten().copied().collect();
    let valid = outputs
        .iter()
        .zip(&inputs)
        .all(|(y, x)| y.is_none_or(|y| x & !y == 0 && y & !top == 0));
    let comparable = decided.iter().all(|a| decided.iter().all(|b| a & b == *a || a & b == *b));
    let terminated = outputs.iter().zip(&crashed).all(|(y, c)| y.is_some() || *c);
    valid && comparable && terminated
}

fn ceil_log2(x: usize) -> u32 {
    usize::BITS - (x.max(1) - 1).leading_zeros()
}

fn criterion_1_and_2() -> (Outcome, Outcome) {
    let mut failures = Vec::new();
    let (mut crash_free, mut bound_failures) = (0, Vec::new());
    let mut runs = 0;
    for n in [4usize, 8, 16, 32] {
        let f = (n - 1) / 2;
        // Rounds as the bound is written: max(1, ceil(log2 f)).
        let r = u64::from(ceil_log2(f).max(1));
        let (trip_bound, message_bound) = (3 * r + 1, 8 * n as u64 * (r + 1));
        for seed in 0..1000 {
            let mut s = Scenario::new(Protocol::AsyncLa, n, f, seed);
            s.trace = TraceLevel::Summary;
            let mut faults = random_faults(n, f, 60, &mut fault_rng(n as u64, seed));
            faults.retain(|x| x.kind == FaultKind::Crash);
            let crashes = faults.len();
            s.faults = faults;
            let out = run(&s).expect("valid scenario");
            runs += 1;
            if !out.report.passed || !la_properties_hold(&out) {
                failures.push((n, seed));
            }
            if crashes == 0 {
                crash_free += 1;
                let worst = out.metrics.per_process.iter().find(|p| p.round_trips > trip_bound || p.messages > message_bound);
                if let Some(p) = worst {
                    bound_failures.push((n, seed, p.round_trips, p.messages));
                }
            }
        }
    }
    (
        outcome(failures.is_empty(), format!("{runs} runs, {} failures {:?}", failures.len(), failures.iter().take(5).collect::<Vec<_>>())),
        outcome(
            bound_failures.is_empty() && crash_free > 0,
            format!("{crash_free} crash-free runs, {} over a bound {:?}", bound_failures.len(), bound_failures.iter().take(5).collect::<Vec<_>>()),
        ),
    )
}

fn criterion_3() -> Outcome {
    let config = LaConfig::new(3, 1).unwrap();
    let found = common::explore::explore_three(config);
    let comparable = found.outcomes.iter().all(|d| d.iter().all(|a| d.iter().all(|b| a.comparable(b))));
    let passed = found.incomparable.is_none() && comparable && found.invalid == 0 && found.terminals > 0;
    outcome(
        passed,
        format!(
            "{} states, {} distinct end states, {} decision vectors, incomparable: {:?}",
            found.states,
            found.terminals,
            found.outcomes.len(),
            found.incomparable
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let (mut runs, mut over_bound, mut max_rounds) = (0, 0, 0);
    for n in [3usize, 5] {
        let f = (n - 1) / 2;
        for seed in 0..500 {
            let mut s = Scenario::new(Protocol::Gla, n, f, seed);
            s.trace = TraceLevel::Summary;
            s.faults = random_faults(n, f, 200, &mut fault_rng(100 + n as u64, seed));
            let out = run(&s).expect("valid scenario");
            runs += 1;
            let names = ["validity", "stability", "comparability", "liveness"];
            let checked = names.iter().all(|p| out.report.property(p).is_some_and(|p| p.passed));
            if !out.report.passed || !checked {
                failures.push((n, seed));
            }
            let rounds = out
                .events
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::Learn { rounds, .. } => Some(*rounds),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            max_rounds = max_rounds.max(rounds);
            if rounds as usize > f + 1 {
                over_bound += 1;
            }
        }
    }
    outcome(
        failures.is_empty() && over_bound == 0,
        format!(
            "{runs} runs: {} property failures {:?}; {over_bound} runs exceed f+1 rounds (max {max_rounds})",
            failures.len(),
            failures.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut problems = Vec::new();
    for seed in 0..50 {
        let mut c = common::staircase(Truncation::PreviousSequence);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        c.run_random(&mut rng);
        for (i, x) in "def".chars().enumerate() {
            c.submit(i, common::cmd(x));
        }
        c.run_random(&mut rng);
        let flagged = c.learns.iter().any(|(_, l)| l.accept_overlaps_previous);
        if flagged || !c.overlaps.is_empty() || !larsm::checker::gla::check_gla(&c.history()).passed() {
            problems.push(format!("staircase seed {seed}"));
        }
    }

    // 50+ sequences, one command per replica per wave.
    let waves = |truncation| {
        let mut config = larsm::gla::GlaConfig::new(3, 1);
        config.truncation = truncation;
        let mut c = common::Cluster::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for wave in 0..50u64 {
            for r in 0..3 {
                c.submit(r, larsm::rsm::command::CommandId::update(r as u32, 0, wave));
            }
            c.run_random(&mut rng);
        }
        c
    };
    let c = waves(Truncation::PreviousSequence);
    let sequences = c.learned.iter().map(Vec::len).min().unwrap();
    let mut max_accept = 0;
    for (p, l) in &c.learns {
        let lv = &c.learned[*p];
        let previous = l.seq.checked_sub(1).map_or(0, |s| lv[s as usize].len());
        // In flight: submitted to anyone, not yet learned here.
        let in_flight = c.submitted.iter().filter(|(_, cmd)| !lv[..=l.seq as usize].iter().any(|s| s.contains(cmd))).count();
        if l.accept_len > lv[l.seq as usize].len() + previous + in_flight {
            problems.push(format!("replica {p} seq {} accept set {}", l.seq, l.accept_len));
        }
        max_accept = max_accept.max(l.accept_len);
    }
    if sequences < 50 || !c.overlaps.is_empty() {
        problems.push(format!("{sequences} sequences, overlaps {:?}", c.overlaps));
    }
    let unbounded = waves(Truncation::Disabled).learns.iter().map(|(_, l)| l.accept_len).max().unwrap();
    // Linear growth would approach the 150 commands submitted.
    if max_accept * 4 > unbounded {
        problems.push(format!("accept set {max_accept} vs {unbounded} without truncation"));
    }

    let mut naive = common::staircase(Truncation::AllLearned);
    common::naive_follow_up(&mut naive);
    let naive_report = larsm::checker::gla::check_gla(&naive.history());
    if naive_report.comparability.passed {
        problems.push("naive truncation passed comparability".into());
    }
    let mut fixed = common::staircase(Truncation::PreviousSequence);
    common::naive_follow_up(&mut fixed);
    if !larsm::checker::gla::check_gla(&fixed.history()).passed() {
        problems.push("replay with truncation of LV[s-1] failed".into());
    }

    outcome(
        problems.is_empty(),
        format!(
            "50 staircase runs; {sequences} sequences, max accept set {max_accept} (no truncation: {unbounded}); naive replay comparability {}; {problems:?}",
            if naive_report.comparability.passed { "passed" } else { "failed as expected" }
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut s = Scenario::new(Protocol::Gla, 3, 1, 6);
    s.workload.clients = 3;
    s.workload.ops_per_client = 60;
    let out = run(&s).expect("valid scenario");
    // Lag and table sizes recomputed from the learn events.
    let mut learned = vec![0u64; s.n];
    let (mut max_lag, mut max_lv, mut worst) = (0u64, 0usize, 0i64);
    for e in &out.events {
        if let TraceEvent::Learn { replica, seq, lv_len, .. } = e {
            learned[*replica] = seq + 1;
            let lag = learned.iter().max().unwrap() - learned.iter().min().unwrap();
            max_lag = max_lag.max(lag);
            max_lv = max_lv.max(*lv_len);
            worst = worst.max(*lv_len as i64 - (lag as i64 + 2));
        }
    }
    let sequences = *learned.iter().min().unwrap();
    outcome(
        out.report.passed && sequences >= 50 && max_lv as u64 <= max_lag + 2,
        format!("{sequences} sequences, max |LV| {max_lv}, max lag {max_lag}, worst excess over lag+2 at a learn {worst}"),
    )
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let mut inconclusive = 0;
    let mut histories = 0;
    for n in [3usize, 5] {
        let f = (n - 1) / 2;
        for seed in 0..100 {
            let mut s = Scenario::new(Protocol::Rsm, n, f, seed);
            s.trace = TraceLevel::Summary;
            s.workload.clients = 10;
            s.workload.ops_per_client = 20;
            s.workload.key_range = 10;
            s.faults = random_faults(n, f, 1500, &mut fault_rng(200 + n as u64, seed));
            let out = run(&s).expect("valid scenario");
            histories += 1;
            let lin = out.report.property("linearizability").expect("rsm runs check linearizability");
            if lin.witness.as_deref().is_some_and(|w| w.contains("inconclusive")) {
                inconclusive += 1;
            }
            if !out.report.passed {
                failures.push((n, seed));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut disagreements = 0;
    for _ in 0..50 {
        let h = common::random_history(&mut rng, 8);
        let got = check_linearizability(&h).expect("small history").is_linearizable();
        if got != common::brute_force_linearizable(&h) {
            disagreements += 1;
        }
    }
    outcome(
        failures.is_empty() && disagreements == 0,
        format!(
            "{histories} histories, {} failures {:?} ({inconclusive} inconclusive); checker vs brute force: {disagreements}/50 disagree",
            failures.len(),
            failures.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn failure_case() -> Scenario {
    let mut s = Scenario::new(Protocol::Rsm, 5, 2, 1);
    s.workload.clients = 8;
    s.workload.ops_per_client = 60;
    s.faults = vec![larsm::harness::scenario::Fault {
        kind: FaultKind::Crash,
        tick: 1000,
        target: Some(larsm::harness::scenario::FaultTarget::Process(1)),
    }];
    s
}

fn criterion_8() -> Outcome {
    let s = failure_case();
    let out = run(&s).expect("valid scenario");
    let rsm = out.metrics.rsm.as_ref().expect("rsm metrics");
    let first = (1000 / rsm.window) as usize;
    let after = &rsm.committed_ops_per_window[first.min(rsm.committed_ops_per_window.len())..];
    let before = &rsm.committed_ops_per_window[..first.min(rsm.committed_ops_per_window.len())];
    let mean = |w: &[u64]| w.iter().sum::<u64>() as f64 / w.len().max(1) as f64;
    outcome(
        out.report.passed && !after.is_empty() && after.iter().all(|&c| c > 0),
        format!(
            "{} windows after the crash, min {} ops, mean {:.1} (before: {:.1})",
            after.len(),
            after.iter().min().copied().unwrap_or(0),
            mean(after),
            mean(before)
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut base = Scenario::new(Protocol::Rsm, 3, 1, 9);
    base.workload.clients = 8;
    base.workload.ops_per_client = 50;
    let rows = sweep(&base, SweepParam::ReadRatio, &[0.1, 0.5, 0.9]).expect("valid sweep");
    let sizes: Vec<f64> = rows.iter().map(|r| r.metrics.gla.as_ref().unwrap().mean_proposal_size).collect();
    let decreasing = sizes.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && rows.iter().all(|r| r.passed),
        format!("mean proposal size at readRatio 0.1/0.5/0.9: {sizes:.2?}"),
    )
}

fn criterion_10() -> Outcome {
    let mut scenarios = vec![failure_case(), Scenario::new(Protocol::Rsm, 3, 1, 4)];
    for protocol in [Protocol::AsyncLa, Protocol::Gla] {
        let mut s = Scenario::new(protocol, 5, 2, 5);
        s.faults = random_faults(5, 2, 100, &mut fault_rng(300, 5));
        scenarios.push(s);
    }
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut differing = Vec::new();
    for s in &scenarios {
        for dir in &dirs {
            run(s).expect("valid scenario").write_to(dir.path()).unwrap();
        }
        for file in ["trace.jsonl", "metrics.json", "report.json"] {
            let a = std::fs::read(dirs[0].path().join(file)).unwrap();
            let b = std::fs::read(dirs[1].path().join(file)).unwrap();
            if a != b {
                differing.push(format!("{} {file}", s.protocol.name()));
            }
        }
    }
    outcome(differing.is_empty(), format!("{} scenarios run twice, differing files: {differing:?}", scenarios.len()))
}

fn main() {
    let mut results: Vec<(u32, Outcome, Duration)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed())
    };
    let t = Instant::now();
    let (one, two) = criterion_1_and_2();
    let elapsed = t.elapsed();
    results.push((1, one, elapsed));
    results.push((2, two, elapsed));
    let rest: [(u32, &dyn Fn() -> Outcome); 8] = [
        (3, &criterion_3),
        (4, &criterion_4),
        (5, &criterion_5),
        (6, &criterion_6),
        (7, &criterion_7),
        (8, &criterion_8),
        (9, &criterion_9),
        (10, &criterion_10),
    ];
    for (id, f) in rest {
        let (o, d) = timed(f);
        results.push((id, o, d));
    }
    let mut unexpected = Vec::new();
    for (id, o, d) in &results {
        let status = match (o.passed, KNOWN_RED.contains(id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(*id);
                "FAIL"
            }
        };
        println!("criterion {id:>2}: {status} [{d:.1?}] {}", o.detail);
    }
    // Runtime targets: 1 and 2 share one pass under five minutes, 3 under two.
    let runtime = |id: u32| results.iter().find(|r| r.0 == id).map(|r| r.2).unwrap();
    if runtime(1) > Duration::from_secs(300) {
        println!("criterion  1: runtime over 5 min");
        unexpected.push(1);
    }
    if runtime(3) > Duration::from_secs(120) {
        println!("criterion  3: runtime over 2 min");
        unexpected.push(3);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
