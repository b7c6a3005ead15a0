// SPDX-License-Identifier: Apache-2.0

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Everything runs headless with the grammar translator and the
//! rule-based composer.

#[path = "../../core/tests/support/active_set.rs"]
mod active_set;
#[path = "../../core/tests/support/conflict_oracle.rs"]
mod conflict_oracle;
#[allow(dead_code)]
#[path = "../../core/tests/support/grammar_corpus.rs"]
mod grammar_corpus;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use loopbench_core::assurance::VerdictLabel;
use loopbench_core::config::RealizationConfig;
use loopbench_core::conflict::{classify_pair, ConflictKind};
use loopbench_core::events::{read_log, Event, EventRecord};
use loopbench_core::intent_model::{Intent, PolicyIr, PolicyMetadata};
use loopbench_core::realization::stubs::{defect_corpus, ExhaustTranslator, FaultyTranslator};
use loopbench_core::realization::{grammar_translate, realize, GrammarTranslator};
use loopbench_core::scenario::{recover_store, run, s1, RunOptions, EVENTS_FILE, KPI_FILE, STORE_FILE};
use loopbench_core::store::IntentStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: u64 = 42;

type Outcome = Result<String, String>;

fn meta(p: &PolicyIr) -> PolicyMetadata {
    PolicyMetadata {
        scope_fingerprint: p.scope.fingerprint(),
        bound_resources: BTreeSet::new(),
        bound_kpis: BTreeSet::new(),
        priority: p.priority,
        topology_version: 1,
    }
}

fn conflict_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut matched = 0;
    let mut first_miss = None;
    let mut kinds: BTreeMap<ConflictKind, usize> = BTreeMap::new();
    for n in 0..1000 {
        let (a, b) = conflict_oracle::random_pair(&mut rng, n);
        let got: BTreeSet<ConflictKind> = classify_pair((&a, &meta(&a)), (&b, &meta(&b)))
            .map_err(|e| e.to_string())?
            .iter()
            .map(|r| r.kind)
            .collect();
        let want = conflict_oracle::oracle(&a, &b);
        for k in &want {
            *kinds.entry(*k).or_default() += 1;
        }
        if got == want {
            matched += 1;
        } else if first_miss.is_none() {
            first_miss = Some(format!("pair {n}: classifier {got:?}, oracle {want:?}"));
        }
    }
    let elapsed = started.elapsed();
    let detail = format!("{matched}/1000 match in {:.2} s; oracle kinds {kinds:?}", elapsed.as_secs_f64());
    if matched == 1000 && elapsed < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(first_miss.map_or(detail.clone(), |m| format!("{detail}; {m}")))
    }
}

fn with_placeholder_ids(p: &PolicyIr) -> Value {
    let mut v = serde_json::to_value(p).expect("policy serializes");
    v["policy_id"] = "policy".into();
    v["intent_id"] = "intent".into();
    v
}

fn realization_convergence() -> Outcome {
    let cfg = RealizationConfig::default();
    let mut first_try = 0;
    for (i, case) in grammar_corpus::corpus().iter().enumerate() {
        let intent = Intent::new(format!("c{i}"), case.text.clone(), 0);
        match realize(&intent, &mut GrammarTranslator, &cfg) {
            Ok(r)
                if r.attempts.len() == 1
                    && grammar_corpus::same_json(&with_placeholder_ids(&r.policy), &case.expected) =>
            {
                first_try += 1
            }
            Ok(r) => return Err(format!("`{}` took {} attempts or compiled wrongly", case.text, r.attempts.len())),
            Err(f) => return Err(format!("`{}` failed: {f}", case.text)),
        }
    }

    let corpus = defect_corpus(50, SEED);
    let mut converged = 0;
    let mut worst = 0;
    for (i, (text, defects)) in corpus.iter().enumerate() {
        let intent = Intent::new(format!("d{i}"), text.clone(), 0);
        let mut t = FaultyTranslator::new(defects.clone());
        match realize(&intent, &mut t, &cfg) {
            Ok(r) => {
                let clean = grammar_translate(text).map_err(|e| e.to_string())?;
                if !grammar_corpus::same_json(&with_placeholder_ids(&r.policy), &clean) {
                    return Err(format!("defect case {i} converged to the wrong document"));
                }
                worst = worst.max(r.attempts.len());
                if r.attempts.len() <= 3 {
                    converged += 1;
                }
            }
            Err(f) => return Err(format!("defect case {i} ({defects:?}) did not converge: {f}")),
        }
    }

    let intent = Intent::new("x", grammar_corpus::corpus()[0].text.clone(), 0);
    let exhausted = match realize(&intent, &mut ExhaustTranslator, &cfg) {
        Err(f) => f.attempts.len(),
        Ok(_) => 0,
    };
    let detail = format!(
        "grammar {first_try}/60 on attempt 1; defects {converged}/50 within 3 (worst {worst}); exhaust logged {exhausted} attempts"
    );
    if first_try == 60 && converged == 50 && exhausted == 3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn s1_run(remediation: bool) -> Result<Vec<EventRecord>, String> {
    let mut doc = s1();
    doc.config.remediation.enabled = remediation;
    let e = run(&doc, &RunOptions { seed: Some(SEED), ..Default::default() }).map_err(|e| e.to_string())?;
    Ok(e.log().records().to_vec())
}

fn first_tick(recs: &[EventRecord], f: impl Fn(&Event) -> bool) -> Option<u64> {
    recs.iter().find(|r| f(&r.event)).map(|r| r.tick)
}

fn labelled(recs: &[EventRecord], label: VerdictLabel) -> BTreeSet<String> {
    recs.iter()
        .filter_map(|r| match &r.event {
            Event::VerdictIssued { verdict } if verdict.label == label => Some(verdict.intent_id.clone()),
            _ => None,
        })
        .collect()
}

fn s1_baseline() -> Outcome {
    let recs = s1_run(false)?;
    let flag = first_tick(&recs, |e| matches!(e, Event::DriftFlagged { .. }));
    let at_risk =
        first_tick(&recs, |e| matches!(e, Event::VerdictIssued { verdict } if verdict.label != VerdictLabel::Healthy));
    let violation = first_tick(&recs, |e| matches!(e, Event::Violation { .. }));
    let root_violation = first_tick(&recs, |e| matches!(e, Event::Violation { intent_id, .. } if intent_id == "int-1"));
    let roots = labelled(&recs, VerdictLabel::RootCause);
    let victims = labelled(&recs, VerdictLabel::Victim);
    let lead = recs.iter().find_map(|r| match &r.event {
        Event::VerdictIssued { verdict } if verdict.intent_id == "int-1" => {
            verdict.lead_time_ticks.map(|l| (r.tick, l))
        }
        _ => None,
    });

    let (Some(flag), Some(at_risk), Some(violation), Some(root_violation), Some((est_at, est))) =
        (flag, at_risk, violation, root_violation, lead)
    else {
        return Err(format!(
            "missing signal: flag {flag:?}, at-risk {at_risk:?}, violation {violation:?}, lead {lead:?}"
        ));
    };
    let truth = root_violation - est_at;
    let error = (est as f64 - truth as f64).abs() / truth as f64;
    let detail = format!(
        "flag t{flag} < at-risk t{at_risk}; violation t{violation} ({} ticks later); root causes {roots:?}, victims {victims:?}; \
         lead estimate {est} at t{est_at} vs true {truth} ({:.1}% off)",
        violation.saturating_sub(at_risk),
        error * 100.0
    );
    let ok = flag < at_risk
        && at_risk + 10 <= violation
        && roots.iter().eq(["int-1"].iter())
        && victims.iter().eq(["int-2"].iter())
        && error <= 0.2;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_loop_differential() -> Outcome {
    let on = s1_run(true)?;
    let off = s1_run(false)?;
    let count = |recs: &[EventRecord]| recs.iter().filter(|r| matches!(r.event, Event::Violation { .. })).count();
    let (v_on, v_off) = (count(&on), count(&off));
    let executed: Vec<u64> =
        on.iter().filter(|r| matches!(r.event, Event::PlanExecuted { .. })).map(|r| r.tick).collect();
    // With violations, each violated intent must be compliant again within
    // 100 ticks of a plan execution and stay so.
    let restored = v_on == 0
        || {
            let violated: BTreeSet<&str> = on
                .iter()
                .filter_map(|r| match &r.event {
                    Event::Violation { intent_id, .. } => Some(intent_id.as_str()),
                    _ => None,
                })
                .collect();
            violated.iter().all(|id| {
            let last_violation = on
                .iter()
                .filter(|r| matches!(&r.event, Event::Violation { intent_id, .. } if intent_id == id))
                .map(|r| r.tick)
                .max()
                .unwrap_or(0);
            executed.iter().any(|&t| t <= last_violation + 1 && last_violation <= t + 100)
                && on.iter().any(|r| {
                    r.tick > last_violation
                        && matches!(&r.event, Event::VerdictIssued { verdict } if verdict.intent_id == *id && verdict.compliant)
                })
        })
        };
    let detail = format!("remediation on: {v_on} violations, plans executed at {executed:?}; off: {v_off} violations");
    if restored && v_off >= 1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn loopbench(args: &[&str], out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_loopbench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("loopbench {args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["run", "--scenario", "s1", "--seed", "42"];
    loopbench(&args, &a)?;
    loopbench(&args, &b)?;
    let mut sizes = Vec::new();
    for f in [EVENTS_FILE, KPI_FILE] {
        let (x, y) = (fs::read(a.join(f)).map_err(|e| e.to_string())?, fs::read(b.join(f)).map_err(|e| e.to_string())?);
        if x != y {
            return Err(format!("{f} differs between runs"));
        }
        sizes.push(format!("{f} {} bytes", x.len()));
    }
    Ok(format!("byte-identical: {}", sizes.join(", ")))
}

fn false_alarms() -> Outcome {
    let mut doc = s1();
    doc.faults.clear();
    doc.config.remediation.enabled = false;
    let e = run(&doc, &RunOptions { ticks: Some(10_000), seed: Some(SEED), ..Default::default() })
        .map_err(|e| e.to_string())?;
    let flags: Vec<String> = e
        .log()
        .records()
        .iter()
        .filter_map(|r| match &r.event {
            Event::DriftFlagged { resource, kpi, .. } => Some(format!("t{} {resource} {kpi:?}", r.tick)),
            _ => None,
        })
        .collect();
    let series = e.drift().states().len();
    let detail = format!("{} DriftFlagged over 10000 ticks and {series} series {flags:?}", flags.len());
    if flags.len() <= 1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = dir.path().join("reference");
    loopbench(&["run", "--scenario", "s1", "--seed", "42"], &reference)?;
    let ref_events = fs::read(reference.join(EVENTS_FILE)).map_err(|e| e.to_string())?;
    let ref_kpis = fs::read(reference.join(KPI_FILE)).map_err(|e| e.to_string())?;
    let ref_store = fs::read(reference.join(STORE_FILE)).map_err(|e| e.to_string())?;
    let (records, _) = read_log(&reference.join(EVENTS_FILE)).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut points: Vec<usize> = (0..20).map(|_| rng.random_range(1..records.len())).collect();
    points.sort_unstable();
    for (i, &k) in points.iter().enumerate() {
        let out = dir.path().join(format!("kill-{i}"));
        fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        let mut text: String = records[..k].iter().map(|r| r.to_line() + "\n").collect();
        if i % 2 == 1 {
            let next = records[k].to_line();
            text.push_str(&next[..next.len() / 2]);
        }
        fs::write(out.join(EVENTS_FILE), text).map_err(|e| e.to_string())?;

        let recovered = recover_store(&out).map_err(|e| e.to_string())?;
        if recovered != IntentStore::replay(&records[..k]) {
            return Err(format!("kill at event {k}: recovered store differs from the uninterrupted run"));
        }
        loopbench(&["run", "--scenario", "s1", "--seed", "42"], &out)?;
        for (f, want) in [(EVENTS_FILE, &ref_events), (KPI_FILE, &ref_kpis), (STORE_FILE, &ref_store)] {
            if fs::read(out.join(f)).map_err(|e| e.to_string())? != *want {
                return Err(format!("kill at event {k}: resumed {f} differs from the uninterrupted run"));
            }
        }
    }
    Ok(format!("20 kill points {points:?} of {} events; prefix stores and resumed outputs identical", records.len()))
}

fn active_set_invariant() -> Outcome {
    let mut resolved = 0;
    for seed in 0..25 {
        resolved += active_set::random_walk(seed, 200)?;
    }
    Ok(format!("25 random 200-step sequences, {resolved} escalations resolved, no contradicting active pair"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("conflict oracle equivalence", conflict_oracle_equivalence),
        ("realization loop convergence", realization_convergence),
        ("S1 early warning and disambiguation", s1_baseline),
        ("closed-loop differential", closed_loop_differential),
        ("determinism", determinism),
        ("false-alarm bound", false_alarms),
        ("crash recovery", crash_recovery),
        ("active-set invariant", active_set_invariant),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
