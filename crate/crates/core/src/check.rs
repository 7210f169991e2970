//! Exhaustive comparison of the monitor against the oracle.
//!
//! Formulas are enumerated by node count. For each formula the traces of
//! length `1..=max_len` are explored as a prefix tree: monitor states after a
//! non-final cell are shared by every trace with that prefix, and the oracle
//! truth of all traces of one length is computed at once in a
//! [`TraceBatch`], one trace per lane. Lane `j` of the length-`n` batch holds
//! the trace whose cell `p` is subset number `digit p of j` in base
//! `2^|alphabet|`.

use std::time::Instant;

use crate::atoms::{AtomId, AtomSet, TruthValue};
use crate::engine::{evaluate_fixpoint, evaluate_single_pass, ingest_cell, react, EngineError, MonitorState, Outcome, Phase};
use crate::formula::{post_order, Formula};
use crate::mapsem::{map_state, rows_from, UntilBMap};
use crate::oracle::{all_subsets, lane_set, Cell, Lanes, Trace, TraceBatch, NO_LANES};
use crate::rulegen::{initialise, Rule, RuleSystem};

/// Leaves of the enumeration: every symbol and its negation, `true`, `END`.
pub fn leaves(alphabet: &[String]) -> Vec<Formula> {
    let mut out = Vec::new();
    for a in alphabet {
        out.push(Formula::atom(a));
        out.push(Formula::neg_atom(a));
    }
    out.push(Formula::True);
    out.push(Formula::End);
    out
}

const UNARY: [fn(Formula) -> Formula; 4] = [Formula::next, Formula::weak_next, Formula::eventually, Formula::always];
const BINARY: [fn(Formula, Formula) -> Formula; 3] = [Formula::or, Formula::and, Formula::until];

/// All formulas of exactly `size` nodes built from `by_size[1..size]`.
fn build_size(by_size: &[Vec<Formula>], size: usize, leaves: &[Formula], mut emit: impl FnMut(Formula)) {
    if size == 1 {
        leaves.iter().cloned().for_each(emit);
        return;
    }
    for op in UNARY {
        for c in &by_size[size - 1] {
            emit(op(c.clone()));
        }
    }
    for left in 1..size - 1 {
        let right = size - 1 - left;
        for op in BINARY {
            for l in &by_size[left] {
                for r in &by_size[right] {
                    emit(op(l.clone(), r.clone()));
                }
            }
        }
    }
}

/// Random formula of exactly `size` nodes with operators and leaves drawn
/// uniformly.
pub fn random_formula<R: rand::Rng>(size: usize, alphabet: &[String], rng: &mut R) -> Formula {
    assert!(size >= 1, "a formula has at least one node");
    if size == 1 {
        let leaves = leaves(alphabet);
        return leaves[rng.gen_range(0..leaves.len())].clone();
    }
    if size == 2 || rng.gen_bool(4.0 / 7.0) {
        let op = UNARY[rng.gen_range(0..UNARY.len())];
        return op(random_formula(size - 1, alphabet, rng));
    }
    let left = rng.gen_range(1..size - 1);
    let op = BINARY[rng.gen_range(0..BINARY.len())];
    op(random_formula(left, alphabet, rng), random_formula(size - 1 - left, alphabet, rng))
}

/// Calls `f` on every formula with `1..=max_nodes` nodes, smallest first.
/// Only formulas below the largest size are kept in memory.
pub fn for_each_formula(max_nodes: usize, alphabet: &[String], mut f: impl FnMut(&Formula)) {
    let leaves = leaves(alphabet);
    let mut by_size: Vec<Vec<Formula>> = vec![Vec::new()];
    for size in 1..=max_nodes {
        if size == max_nodes {
            build_size(&by_size, size, &leaves, |g| f(&g));
        } else {
            let mut level = Vec::new();
            build_size(&by_size, size, &leaves, |g| level.push(g));
            level.iter().for_each(&mut f);
            by_size.push(level);
        }
    }
}

/// Number of formulas [`for_each_formula`] visits.
pub fn count_formulas(max_nodes: usize, alphabet_len: usize) -> u128 {
    let leaves = 2 * alphabet_len as u128 + 2;
    let mut n = vec![0u128; max_nodes + 1];
    for size in 1..=max_nodes {
        n[size] = if size == 1 {
            leaves
        } else {
            let unary = UNARY.len() as u128 * n[size - 1];
            let binary: u128 = (1..size - 1).map(|l| n[l] * n[size - 1 - l]).sum::<u128>() * BINARY.len() as u128;
            unary + binary
        };
    }
    n.iter().sum()
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub max_nodes: usize,
    pub max_len: usize,
    pub alphabet: Vec<String>,
    /// Check early verdicts against all extensions of 1..=`horizon` cells.
    pub horizon: Option<usize>,
    /// Compare single-pass and fixpoint evaluation on every cell.
    pub compare_modes: bool,
    /// Map every intermediate state of eventually/always-free formulas.
    pub map_chain: bool,
    /// Upper bound on formulas examined, for quick runs.
    pub limit: Option<u64>,
    /// Only formulas satisfying the predicate are examined.
    pub filter: Option<fn(&Formula) -> bool>,
}

impl SuiteConfig {
    pub fn new(max_nodes: usize, max_len: usize, alphabet: &[&str]) -> Self {
        SuiteConfig {
            max_nodes,
            max_len,
            alphabet: alphabet.iter().map(|s| s.to_string()).collect(),
            horizon: None,
            compare_modes: false,
            map_chain: false,
            limit: None,
            filter: None,
        }
    }
}

/// One recorded failure, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub kind: &'static str,
    pub formula: String,
    pub trace: String,
    pub detail: String,
}

/// Tallies over (formula, trace) pairs unless stated otherwise.
#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub formulas: u64,
    pub cases: u64,
    /// Cases whose verdict differs from the oracle, engine errors included.
    pub mismatches: u64,
    pub engine_errors: u64,
    /// Formulas with at least one mismatch.
    pub formulas_with_mismatch: u64,
    /// (formula, prefix) pairs with a verdict before the final cell.
    pub early_verdicts: u64,
    pub irrevocability_violations: u64,
    /// Evaluated cells compared between the two modes, and divergences.
    pub mode_cells: u64,
    pub mode_divergences: u64,
    /// Cells in which some node received more than one truth value.
    pub ambiguous_cells: u64,
    pub map_formulas: u64,
    pub map_cases: u64,
    /// Cases with an invalid chain, per until-B reading: as printed, unfolding.
    pub map_violations: [u64; 2],
    pub map_rows: u64,
    pub map_errors: [u64; 2],
    pub examples: Vec<Example>,
    pub seconds: f64,
}

const MAX_EXAMPLES: usize = 12;

impl SuiteReport {
    fn example(&mut self, kind: &'static str, f: &Formula, trace: &Trace, detail: String) {
        if self.examples.iter().filter(|e| e.kind == kind).count() < MAX_EXAMPLES / 3 && self.examples.len() < MAX_EXAMPLES {
            self.examples.push(Example {
                kind,
                formula: f.to_string(),
                trace: crate::traceio::serialize(trace),
                detail,
            });
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "formulas={} cases={} mismatches={} (engine errors {}, formulas affected {}) early_verdicts={} irrevocability_violations={} mode_cells={} mode_divergences={} ambiguous_cells={}",
            self.formulas,
            self.cases,
            self.mismatches,
            self.engine_errors,
            self.formulas_with_mismatch,
            self.early_verdicts,
            self.irrevocability_violations,
            self.mode_cells,
            self.mode_divergences,
            self.ambiguous_cells,
        );
        if self.map_formulas > 0 {
            s.push_str(&format!(
                " map_formulas={} map_cases={} map_violations(as-printed)={} map_violations(unfolding)={} map_rows={} map_errors={:?}",
                self.map_formulas, self.map_cases, self.map_violations[0], self.map_violations[1], self.map_rows, self.map_errors
            ));
        }
        s.push_str(&format!(" time={:.1}s", self.seconds));
        s
    }
}

/// Runs the suite with the generated rule systems.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    run_suite_with(cfg, |f| initialise(f).expect("enumerated formulas are NNF"))
}

/// Runs the suite with rule systems produced by `compile`.
pub fn run_suite_with(cfg: &SuiteConfig, compile: impl Fn(&Formula) -> RuleSystem) -> SuiteReport {
    let start = Instant::now();
    let mut report = SuiteReport::default();
    let subsets = all_subsets(&cfg.alphabet);
    let mut seen = 0u64;
    for_each_formula(cfg.max_nodes, &cfg.alphabet, |f| {
        if cfg.limit.is_some_and(|l| seen >= l) || cfg.filter.is_some_and(|keep| !keep(f)) {
            return;
        }
        seen += 1;
        let sys = compile(f);
        check_formula(&sys, cfg, &subsets, &mut report);
    });
    report.seconds = start.elapsed().as_secs_f64();
    report
}

struct FormulaCtx<'a> {
    sys: &'a RuleSystem,
    cfg: &'a SuiteConfig,
    subsets: &'a [Cell],
    width: usize,
    /// Indexed by trace length; entry 0 unused.
    evals: Vec<Vec<Vec<Lanes>>>,
    live: Vec<Lanes>,
    truth: Vec<Lanes>,
    map: bool,
    has_until: bool,
    /// Lanes with an invalid map row, per length and reading.
    map_bad: Vec<[Lanes; 2]>,
    wrong: Vec<Lanes>,
    errors: Vec<Lanes>,
}

/// The runs of one evaluated cell.
struct CellRun {
    result: Result<MonitorState, EngineError>,
    ingested: Option<AtomSet>,
    derived: Vec<AtomId>,
}

impl FormulaCtx<'_> {
    fn prefix_trace(&self, code: usize, k: usize) -> Trace {
        let mut cells = Vec::with_capacity(k);
        let mut c = code;
        for _ in 0..k {
            cells.push(self.subsets[c % self.width].clone());
            c /= self.width;
        }
        Trace::new(cells)
    }

    /// Lanes of the length-`n` batch whose first `k` cells are `code`.
    fn subtree(&self, code: usize, k: usize, n: usize) -> Lanes {
        let mut out = NO_LANES;
        let step = self.width.pow(k as u32);
        for r in 0..self.width.pow((n - k) as u32) {
            let lane = code + step * r;
            out[lane / 64] |= 1 << (lane % 64);
        }
        out
    }

    fn run_cell(&self, state: &MonitorState, cell: &Cell, last: bool, report: &mut SuiteReport) -> CellRun {
        let mut st = state.clone();
        ingest_cell(self.sys, &mut st, cell, last).expect("state awaits a cell");
        let ingested = st.atoms().clone();
        let mut fp = st.clone();
        let fp_res = evaluate_fixpoint(self.sys, &mut fp);
        let mut derived = Vec::new();
        if self.cfg.compare_modes || self.map {
            let sp_res = evaluate_single_pass(self.sys, &mut st);
            report.mode_cells += 1;
            let same = match (&fp_res, &sp_res) {
                (Ok(a), Ok(b)) => a.verdict == b.verdict && fp.atoms() == st.atoms(),
                (Err(a), Err(b)) => a == b,
                _ => false,
            };
            if !same {
                report.mode_divergences += 1;
            }
            if let Ok(r) = &sp_res {
                derived = r.derived.clone();
            }
        }
        let result = fp_res.map(|_| fp);
        if let Ok(done) = &result {
            if self.ambiguous(done.atoms()) {
                report.ambiguous_cells += 1;
            }
        }
        CellRun {
            result,
            ingested: Some(ingested),
            derived,
        }
    }

    fn ambiguous(&self, atoms: &AtomSet) -> bool {
        let ix = self.sys.atom_index();
        (0..self.sys.table().len()).any(|n| ix.truth_range(n).filter(|&id| atoms.contains(id)).count() > 1)
    }

    /// Checks map rows against the oracle on the lanes of `lengths`.
    fn check_rows(&mut self, rows: &[(AtomSet, usize)], code: usize, k: usize, lengths: std::ops::RangeInclusive<usize>, report: &mut SuiteReport) {
        let variants: &[UntilBMap] = if self.has_until {
            &[UntilBMap::AsPrinted, UntilBMap::Unfolding]
        } else {
            &[UntilBMap::AsPrinted]
        };
        let masks: Vec<(usize, Lanes)> = lengths.map(|n| (n, self.subtree(code, k, n))).collect();
        for (atoms, index) in rows {
            report.map_rows += 1;
            for (vi, &v) in variants.iter().enumerate() {
                let j = map_state(self.sys, atoms, *index, v);
                for &(n, mask) in &masks {
                    let bad = match &j {
                        Ok(j) => {
                            let lanes = j.eval_lanes(&self.evals[n], n, self.live[n]);
                            std::array::from_fn(|w| (lanes[w] ^ self.truth[n][w]) & mask[w])
                        }
                        Err(_) => mask,
                    };
                    for w in 0..4 {
                        self.map_bad[n][vi][w] |= bad[w];
                        if !self.has_until {
                            self.map_bad[n][1][w] |= bad[w];
                        }
                    }
                }
                if j.is_err() {
                    report.map_errors[vi] += 1;
                    if !self.has_until {
                        report.map_errors[1] += 1;
                    }
                }
            }
        }
    }

    fn verdict_lanes(&self, outcome: Outcome, n: usize) -> Lanes {
        match outcome {
            Outcome::Success => self.live[n],
            Outcome::Failure => NO_LANES,
        }
    }

    fn record(&mut self, n: usize, mask: Lanes, got: Result<Outcome, ()>) {
        let wrong: Lanes = match got {
            Ok(o) => {
                let v = self.verdict_lanes(o, n);
                std::array::from_fn(|w| (v[w] ^ self.truth[n][w]) & mask[w])
            }
            Err(()) => {
                for w in 0..4 {
                    self.errors[n][w] |= mask[w];
                }
                mask
            }
        };
        for w in 0..4 {
            self.wrong[n][w] |= wrong[w];
        }
    }

    fn visit(&mut self, state: &MonitorState, code: usize, k: usize, report: &mut SuiteReport) {
        let max_len = self.cfg.max_len;
        if self.map {
            self.check_rows(&[(state.atoms().clone(), k)], code, k, k + 1..=max_len, report);
        }
        let step = self.width.pow(k as u32);
        for s in 0..self.width {
            let cell = &self.subsets[s];
            let code2 = code + s * step;
            let k2 = k + 1;
            // The trace ends here.
            let run = self.run_cell(state, cell, true, report);
            self.after_cell(&run, code2, k2, k2..=k2, report);
            if k2 >= max_len {
                continue;
            }
            // The trace goes on.
            let run = self.run_cell(state, cell, false, report);
            self.after_cell(&run, code2, k2, k2 + 1..=max_len, report);
            if let Ok(st) = &run.result {
                if st.phase() == Phase::Halted {
                    self.check_irrevocable(st, code2, k2, report);
                } else {
                    let mut next = st.clone();
                    react(self.sys, &mut next).expect("evaluated state reacts");
                    self.visit(&next, code2, k2, report);
                }
            }
        }
    }

    fn after_cell(&mut self, run: &CellRun, code: usize, k: usize, lengths: std::ops::RangeInclusive<usize>, report: &mut SuiteReport) {
        let verdict = match &run.result {
            Ok(st) => st.verdict().map(|v| v.outcome),
            Err(_) => None,
        };
        let errored = run.result.is_err();
        if verdict.is_some() || errored {
            for n in lengths.clone() {
                let mask = self.subtree(code, k, n);
                self.record(n, mask, verdict.ok_or(()));
            }
        }
        if self.map {
            if let Some(ingested) = &run.ingested {
                let rows: Vec<(AtomSet, usize)> = rows_from(self.sys, k, ingested, &run.derived, &[])
                    .into_iter()
                    .map(|r| (r.atoms, k - 1))
                    .collect();
                self.check_rows(&rows, code, k, lengths, report);
            }
        }
    }

    fn check_irrevocable(&self, st: &MonitorState, code: usize, k: usize, report: &mut SuiteReport) {
        let Some(horizon) = self.cfg.horizon else {
            return;
        };
        report.early_verdicts += 1;
        let outcome = st.verdict().expect("halted").outcome;
        let prefix = self.prefix_trace(code, k);
        let table = self.sys.table();
        for extra in 1..=horizon {
            let batch = TraceBatch::extensions(&prefix, &self.cfg.alphabet, extra);
            let holds = batch.evaluate(table)[table.root()][0];
            let want = match outcome {
                Outcome::Success => batch.live(),
                Outcome::Failure => NO_LANES,
            };
            if holds != want {
                report.irrevocability_violations += 1;
                let lane = (0..batch.lane_count())
                    .find(|&l| lane_set(&holds, l) != lane_set(&want, l))
                    .unwrap_or(0);
                report.example(
                    "irrevocability",
                    self.sys.formula(),
                    &batch.trace(lane),
                    format!("{outcome} issued at cell {k} of the prefix"),
                );
                return;
            }
        }
    }
}

/// True when no temporal operator occurs below an eventually, always or
/// until. Reactivating such an operator never restarts a subformula that is
/// still tracking an earlier cell, so each node follows a single instance.
pub fn single_instance(f: &Formula) -> bool {
    fn temporal_free(f: &Formula) -> bool {
        !matches!(
            f,
            Formula::Next(_) | Formula::WeakNext(_) | Formula::Eventually(_) | Formula::Always(_) | Formula::Until(..)
        ) && f.children().into_iter().all(temporal_free)
    }
    match f {
        Formula::Eventually(_) | Formula::Always(_) | Formula::Until(..) => f.children().into_iter().all(temporal_free),
        _ => f.children().into_iter().all(single_instance),
    }
}

fn has_until(f: &Formula) -> bool {
    matches!(f, Formula::Until(..)) || f.children().into_iter().any(has_until)
}

/// Runs every check on one formula, adding to `report`.
pub fn check_formula(sys: &RuleSystem, cfg: &SuiteConfig, subsets: &[Cell], report: &mut SuiteReport) {
    let f = sys.formula();
    let table = post_order(f).expect("NNF formula");
    let max_len = cfg.max_len;
    let width = subsets.len();
    let mut evals = vec![Vec::new()];
    let mut live = vec![NO_LANES];
    let mut truth = vec![NO_LANES];
    for n in 1..=max_len {
        let batch = TraceBatch::all_traces(&cfg.alphabet, n);
        let e = batch.evaluate(&table);
        truth.push(e[table.root()][0]);
        live.push(batch.live());
        evals.push(e);
    }
    let map = cfg.map_chain && f.is_eventually_always_free();
    let mut ctx = FormulaCtx {
        sys,
        cfg,
        subsets,
        width,
        evals,
        live,
        truth,
        map,
        has_until: has_until(f),
        map_bad: vec![[NO_LANES; 2]; max_len + 1],
        wrong: vec![NO_LANES; max_len + 1],
        errors: vec![NO_LANES; max_len + 1],
    };
    if max_len > 0 {
        ctx.visit(&MonitorState::initial(sys), 0, 0, report);
    }
    report.formulas += 1;
    let mut any = false;
    for n in 1..=max_len {
        let cases = width.pow(n as u32) as u64;
        report.cases += cases;
        let wrong: u64 = ctx.wrong[n].iter().map(|w| w.count_ones() as u64).sum();
        report.engine_errors += ctx.errors[n].iter().map(|w| w.count_ones() as u64).sum::<u64>();
        if wrong > 0 {
            any = true;
            report.mismatches += wrong;
            let lane = (0..cases as usize).find(|&l| lane_set(&ctx.wrong[n], l)).unwrap_or(0);
            let trace = ctx.prefix_trace(lane, n);
            let got = crate::engine::monitor_trace(sys, &trace, crate::engine::EvalMode::Fixpoint);
            let detail = match got {
                Ok(v) => format!("monitor {v}, oracle {}", lane_set(&ctx.truth[n], lane)),
                Err(e) => format!("engine error: {e}"),
            };
            report.example("verdict", f, &trace, detail);
        }
        if map {
            report.map_cases += cases;
            for vi in 0..2 {
                report.map_violations[vi] += ctx.map_bad[n][vi].iter().map(|w| w.count_ones() as u64).sum::<u64>();
            }
            if let Some(lane) = (0..cases as usize).find(|&l| lane_set(&ctx.map_bad[n][0], l)) {
                report.example("map", f, &ctx.prefix_trace(lane, n), "invalid map row".into());
            }
        }
    }
    if map {
        report.map_formulas += 1;
    }
    if any {
        report.formulas_with_mismatch += 1;
    }
}

/// Test fixture: the rule system of `f` with one evaluation-table cell
/// (generated rule `origin`) producing the opposite truth value.
pub fn flip_table_cell(sys: &RuleSystem, origin: usize) -> RuleSystem {
    let rules: Vec<Rule> = sys
        .eval_rules()
        .iter()
        .cloned()
        .map(|mut r| {
            if r.origin == origin {
                if let crate::atoms::StateAtom::Truth(n, v, q) = r.head {
                    let flipped = match v {
                        TruthValue::T => TruthValue::F,
                        TruthValue::F => TruthValue::T,
                        TruthValue::U => TruthValue::U,
                    };
                    r.head = crate::atoms::StateAtom::Truth(n, flipped, q);
                }
            }
            r
        })
        .collect();
    sys.with_eval_rules(rules)
}
