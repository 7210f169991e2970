//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulerunner::bench::{bench_one, default_formulas, linear_fit, state_sizes, BenchConfig};
use rulerunner::check::{random_formula, run_suite, SuiteConfig, SuiteReport};
use rulerunner::engine::{evaluate_fixpoint, evaluate_single_pass, ingest_cell, react, EvalMode, Monitor, MonitorState, Status};
use rulerunner::formula::{parse_formula, Formula};
use rulerunner::mapsem::{check_rewriting_chain, UntilBMap};
use rulerunner::rulegen::{initialise, rule_count, RULES_PER_NODE, VERDICT_RULES};
use rulerunner::traceio::{gen_random_trace, parse_trace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(id: u32, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id}. {name}: {}", o.detail);
}

fn ab() -> Vec<String> {
    vec!["a".into(), "b".into()]
}

fn paper_example() -> Outcome {
    let start = Instant::now();
    let f = parse_formula("a | F b").unwrap();
    let sys = initialise(&f).unwrap();
    let trace = parse_trace("c - a - b,d - b,END").unwrap();
    let mut m = Monitor::new(&sys, EvalMode::Fixpoint).with_explain();
    let mut verdict = None;
    for (i, cell) in trace.cells.iter().enumerate() {
        if let Status::Done(v) = m.push(cell, i + 1 == trace.len()).unwrap() {
            verdict = Some(v);
            break;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let want: [[(&str, &str); 4]; 3] = [
        [
            ("state", "R[a], R[b], R[F b], R[(a | F b)]B"),
            ("+ obs", "R[a], R[b], R[F b], R[(a | F b)]B, c"),
            ("eval", "[a]F, [b]F, [F b]?, [(a | F b)]?R"),
            ("react", "R[b], R[F b], R[(a | F b)]R"),
        ],
        [
            ("state", "R[b], R[F b], R[(a | F b)]R"),
            ("+ obs", "R[b], R[F b], R[(a | F b)]R, a"),
            ("eval", "[b]F, [F b]?, [(a | F b)]?R"),
            ("react", "R[b], R[F b], R[(a | F b)]R"),
        ],
        [
            ("state", "R[b], R[F b], R[(a | F b)]R"),
            ("+ obs", "R[b], R[F b], R[(a | F b)]R, b, d"),
            ("eval", "[b]T, [F b]T, [(a | F b)]T, SUCCESS"),
            ("STOP", "PROPERTY SATISFIED"),
        ],
    ];
    let got: Vec<Vec<(&str, String)>> = m.explain_blocks().iter().map(|b| b.rows(&sys)).collect();
    let want: Vec<Vec<(&str, String)>> = want
        .iter()
        .map(|b| b.iter().map(|&(l, c)| (l, c.to_string())).collect())
        .collect();
    let mut mismatched = 0;
    for (g, w) in got.iter().zip(&want) {
        mismatched += g.iter().zip(w).filter(|(a, b)| a != b).count();
        mismatched += g.len().abs_diff(w.len());
    }
    mismatched += 4 * got.len().abs_diff(want.len());
    let verdict = verdict.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
    Outcome {
        pass: mismatched == 0 && verdict == "SUCCESS@3" && secs < 1.0,
        detail: format!("verdict {verdict}, {mismatched} of 12 explain rows differ, {secs:.4}s (limit 1s)"),
    }
}

fn table_two() -> Outcome {
    let f = parse_formula("a | X b").unwrap();
    let sys = initialise(&f).unwrap();
    let trace = parse_trace("b - b").unwrap();
    let chain = match check_rewriting_chain(&f, &trace, UntilBMap::AsPrinted) {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let want = [
        "[u,0 ⊨ a]_F ⊔ [u,0 ⊨ X b]_F",
        "[u,0 ⊨ a]_F ⊔ [u,0 ⊨ X b]_F",
        "⊥ ⊔ [u,0 ⊨ X b]_F",
        "⊥ ⊔ [u,0 ⊨ X b]_F",
        "[u,0 ⊨ X b]_F",
        "[u,1 ⊨ b]_F",
        "[u,1 ⊨ b]_F",
        "⊤",
        "⊤",
        "⊤",
        "⊤",
    ];
    let got: Vec<String> = chain.steps.iter().map(|s| s.render_judgement()).collect();
    let differing = got.iter().zip(want).filter(|(g, w)| g.as_str() != *w).count() + got.len().abs_diff(want.len());
    let last_state = chain.steps.last().map(|s| s.render_state(&sys)).unwrap_or_default();
    let verdict = chain.verdict.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
    Outcome {
        pass: differing == 0 && chain.all_valid() && verdict == "SUCCESS@2" && last_state == "SUCCESS",
        detail: format!(
            "{} rows, {differing} judgements differ, all rewritings valid: {}, verdict {verdict}",
            got.len(),
            chain.all_valid()
        ),
    }
}

fn suite() -> SuiteReport {
    let mut cfg = SuiteConfig::new(7, 4, &["a", "b"]);
    cfg.horizon = Some(3);
    cfg.compare_modes = true;
    cfg.map_chain = true;
    run_suite(&cfg)
}

fn examples(r: &SuiteReport, kind: &str) -> String {
    r.examples
        .iter()
        .filter(|e| e.kind == kind)
        .take(2)
        .map(|e| format!("{} on {}", e.formula, e.trace))
        .collect::<Vec<_>>()
        .join("; ")
}

fn oracle_equivalence(r: &SuiteReport) -> Outcome {
    Outcome {
        pass: r.formulas == 1_718_106 && r.mismatches == 0,
        detail: format!(
            "{} formulas, {} cases, {} mismatches ({} engine errors, {} formulas affected) in {:.0}s; e.g. {}",
            r.formulas,
            r.cases,
            r.mismatches,
            r.engine_errors,
            r.formulas_with_mismatch,
            r.seconds,
            examples(r, "verdict")
        ),
    }
}

fn early_stop(r: &SuiteReport) -> Outcome {
    Outcome {
        pass: r.early_verdicts > 0 && r.irrevocability_violations == 0,
        detail: format!(
            "{} early verdicts, {} not invariant under extensions of 1..3 cells; e.g. {}",
            r.early_verdicts,
            r.irrevocability_violations,
            examples(r, "irrevocability")
        ),
    }
}

fn linear_rule_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let alphabet: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let bound = (RULES_PER_NODE + VERDICT_RULES) as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=200);
        let f = random_formula(n, &alphabet, &mut rng);
        let ratio = rule_count(&f).unwrap() as f64 / n as f64;
        worst = worst.max(ratio);
    }
    let mut overheads = std::collections::BTreeSet::new();
    for _ in 0..100 {
        let p = random_formula(rng.gen_range(1..=100), &alphabet, &mut rng);
        let q = random_formula(rng.gen_range(1..=100), &alphabet, &mut rng);
        let joined = rule_count(&Formula::or(p.clone(), q.clone())).unwrap() as i64;
        overheads.insert(joined - rule_count(&p).unwrap() as i64 - rule_count(&q).unwrap() as i64);
    }
    Outcome {
        pass: worst <= bound && overheads.len() == 1,
        detail: format!("max rules/node {worst:.2} (C = {bound}), disjunction overheads {overheads:?}"),
    }
}

/// Runs one trace cell by cell in both modes; true if they ever disagree.
fn modes_diverge(f: &Formula, cells: &[rulerunner::oracle::Cell]) -> bool {
    let sys = initialise(f).unwrap();
    let mut st = MonitorState::initial(&sys);
    for (i, cell) in cells.iter().enumerate() {
        let last = i + 1 == cells.len();
        ingest_cell(&sys, &mut st, cell, last).unwrap();
        let mut fix = st.clone();
        let mut single = st;
        let a = evaluate_fixpoint(&sys, &mut fix).map(|r| r.verdict);
        let b = evaluate_single_pass(&sys, &mut single).map(|r| r.verdict);
        if a != b || fix.atoms() != single.atoms() || fix.verdict() != single.verdict() {
            return true;
        }
        if a.is_err() || fix.verdict().is_some() {
            return false;
        }
        react(&sys, &mut fix).unwrap();
        st = fix;
    }
    false
}

fn single_pass(r: &SuiteReport) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let alphabet = ab();
    let mut divergent = 0;
    let mut example = String::new();
    for case in 0..10_000u64 {
        let f = random_formula(rng.gen_range(1..=30), &alphabet, &mut rng);
        let n = rng.gen_range(1..=50);
        let t = gen_random_trace(&alphabet, n, 0.5, case).unwrap();
        if modes_diverge(&f, &t.cells) {
            divergent += 1;
            if example.is_empty() {
                example = format!("; e.g. {f} on {}", rulerunner::traceio::serialize(&t));
            }
        }
    }
    Outcome {
        pass: r.mode_cells > 0 && r.mode_divergences == 0 && divergent == 0,
        detail: format!(
            "suite: {} divergences in {} cells; random: {divergent} of 10000 cases{example}",
            r.mode_divergences, r.mode_cells
        ),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn scaling() -> Outcome {
    let sizes = [1_000usize, 10_000, 100_000, 1_000_000];
    let cfg = BenchConfig {
        cells: sizes.to_vec(),
        seed: 7,
        reps: 3,
        density: 0.5,
        mode: EvalMode::Fixpoint,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for bf in default_formulas() {
        let mut totals = Vec::new();
        for &n in &sizes {
            let runs: Result<Vec<f64>, _> = (0..cfg.reps).map(|rep| bench_one(&bf, n, rep, &cfg).map(|r| r.total_ms)).collect();
            match runs {
                Ok(runs) => totals.push(median(runs)),
                Err(e) => {
                    return Outcome {
                        pass: false,
                        detail: format!("{}: {e}", bf.id),
                    }
                }
            }
        }
        let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
        let (_, slope, r2) = linear_fit(&xs, &totals);
        let ratio = (totals[3] / 1e6) / (totals[2] / 1e5);
        let ok = r2 >= 0.98 && (0.5..=2.0).contains(&ratio) && (bf.id != "phi3" || totals[3] < 10_000.0);
        pass &= ok;
        parts.push(format!(
            "{} R²={r2:.4} {:.3}µs/cell avg ratio 1e6:1e5={ratio:.2} 1e6 cells {:.2}s",
            bf.id,
            slope * 1e3,
            totals[3] / 1e3
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn memory_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for bf in default_formulas() {
        match state_sizes(&bf, 1_000_000, 0.5, 8) {
            Ok(sizes) => {
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                pass &= lo == hi && *lo == sizes[0];
                parts.push(format!("{} size {}..{}", bf.id, lo, hi));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", bf.id));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn map_chain(r: &SuiteReport) -> Outcome {
    let [printed, unfolding] = r.map_violations;
    let [printed_err, unfolding_err] = r.map_errors;
    Outcome {
        pass: r.map_cases > 0 && printed == 0 && printed_err == 0,
        detail: format!(
            "{} formulas, {} cases, {} rows; invalid or unmapped cases: as-printed until {} ({} unmappable), unfolding until {} ({} unmappable); e.g. {}",
            r.map_formulas,
            r.map_cases,
            r.map_rows,
            printed,
            printed_err,
            unfolding,
            unfolding_err,
            examples(r, "map")
        ),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    let mut emit = |id: u32, name: &str, o: Outcome| {
        line(id, name, &o);
        all &= o.pass;
    };
    emit(1, "paper example", paper_example());
    emit(2, "map table", table_two());
    let report = suite();
    emit(3, "oracle equivalence", oracle_equivalence(&report));
    emit(4, "early-stop soundness", early_stop(&report));
    emit(5, "linear rule count", linear_rule_count());
    emit(6, "single-pass equivalence", single_pass(&report));
    emit(7, "scaling", scaling());
    emit(8, "constant state", memory_bound());
    emit(9, "map chain validity", map_chain(&report));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
