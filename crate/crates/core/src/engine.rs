//! Cell-by-cell monitoring: ingest observations, chain evaluation rules,
//! detect a verdict, then replace the state with the reactivation output.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::atoms::{AtomId, AtomSet, AtomStyle, StateAtom};
use crate::oracle::{Cell, Trace};
use crate::rulegen::{CompiledRule, Rule, RuleSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("operation needs phase {expected:?}, monitor is in {found:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("cannot monitor an empty trace")]
    EmptyTrace,
    #[error("cell {cell}: both SUCCESS and FAILURE derived")]
    ConflictingVerdicts { cell: usize },
    #[error("cell {cell}: trace ended without a verdict")]
    NoVerdict { cell: usize },
    #[error("cell {cell}: {message}")]
    Source { cell: usize, message: String },
    #[error("input ended after cell {cell} without an END marker")]
    Unterminated { cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    AwaitingCell,
    /// Observations added, evaluation not yet run.
    Ingested,
    Evaluated,
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "SUCCESS",
            Outcome::Failure => "FAILURE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Verdict {
    pub outcome: Outcome,
    /// 1-based cell at which the verdict was derived.
    pub at_cell: usize,
    pub cells_consumed: usize,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.outcome, self.at_cell)
    }
}

/// How evaluation rules are applied within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EvalMode {
    /// Repeated forward-chaining rounds until nothing new is derived.
    #[default]
    Fixpoint,
    /// One sweep over the rules, ordered by the post-order of their owner.
    SinglePass,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonitorState {
    atoms: AtomSet,
    at_end: bool,
    cell_index: usize,
    phase: Phase,
    verdict: Option<Outcome>,
}

impl MonitorState {
    pub fn initial(sys: &RuleSystem) -> Self {
        let index = sys.atom_index();
        let mut atoms = AtomSet::with_universe(index.universe());
        for a in sys.initial_state() {
            atoms.insert(index.encode(a).expect("initial atoms are indexed"));
        }
        MonitorState {
            atoms,
            at_end: false,
            cell_index: 1,
            phase: Phase::AwaitingCell,
            verdict: None,
        }
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn cell_index(&self) -> usize {
        self.cell_index
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.verdict.map(|outcome| Verdict {
            outcome,
            at_cell: self.cell_index,
            cells_consumed: self.cell_index,
        })
    }

    pub fn is_last_cell(&self) -> bool {
        self.at_end
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, sys: &RuleSystem, atom: &StateAtom) -> bool {
        sys.atom_index().encode(atom).is_some_and(|id| self.atoms.contains(id))
    }

    /// The indexed atoms of the state, in id order.
    pub fn to_atoms(&self, sys: &RuleSystem) -> Vec<StateAtom> {
        self.atoms.iter().map(|id| sys.atom_index().decode(id)).collect()
    }

    fn expect(&self, phase: Phase) -> Result<(), EngineError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(EngineError::WrongPhase {
                expected: phase,
                found: self.phase,
            })
        }
    }
}

/// Heads of the rules whose whole body is in `atoms`.
pub fn fc_step(rules: &[Rule], atoms: &BTreeSet<StateAtom>) -> BTreeSet<StateAtom> {
    rules
        .iter()
        .filter(|r| r.body.iter().all(|a| atoms.contains(a)))
        .map(|r| r.head.clone())
        .collect()
}

#[inline]
fn fires(rule: &CompiledRule, atoms: &AtomSet) -> bool {
    rule.body().iter().all(|&id| atoms.contains(id))
}

/// [`fc_step`] over compiled rules and bitset states.
pub fn fc_step_compiled(rules: &[CompiledRule], atoms: &AtomSet) -> AtomSet {
    let mut out = atoms.clone();
    out.clear();
    for r in rules {
        if fires(r, atoms) {
            out.insert(r.head);
        }
    }
    out
}

/// Adds the cell's observations and the end-of-trace fact, plus absence
/// facts for the symbols of every active literal that was not observed.
pub fn ingest_cell(sys: &RuleSystem, state: &mut MonitorState, cell: &Cell, is_last: bool) -> Result<(), EngineError> {
    state.expect(Phase::AwaitingCell)?;
    let index = sys.atom_index();
    for obs in cell {
        if let Some(s) = index.symbol_id(obs) {
            state.atoms.insert(index.present(s));
        }
    }
    state.atoms.insert(if is_last { index.end_marker() } else { index.not_end() });
    for node in 0..sys.table().len() {
        if let Some(s) = index.leaf_symbol(node) {
            if state.atoms.any_in(index.act_range(node)) && !state.atoms.contains(index.present(s)) {
                state.atoms.insert(index.absent(s));
            }
        }
    }
    state.at_end = is_last;
    state.phase = Phase::Ingested;
    Ok(())
}

/// What one evaluation did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalReport {
    /// Forward-chaining applications, including the final one that adds
    /// nothing. A single-pass evaluation reports one.
    pub rounds: usize,
    /// Newly derived atoms in derivation order.
    pub derived: Vec<AtomId>,
    pub verdict: Option<Outcome>,
}

fn active(sys: &RuleSystem, atoms: &AtomSet, node: usize) -> bool {
    atoms.any_in(sys.atom_index().act_range(node)) || node == sys.table().root()
}

/// Applies the evaluation rules until the state stops growing.
pub fn evaluate_fixpoint(sys: &RuleSystem, state: &mut MonitorState) -> Result<EvalReport, EngineError> {
    state.expect(Phase::Ingested)?;
    let mut report = EvalReport::default();
    loop {
        report.rounds += 1;
        let mut fresh: Vec<AtomId> = Vec::new();
        for node in 0..sys.table().len() {
            if !active(sys, &state.atoms, node) {
                continue;
            }
            for r in sys.eval_range(node) {
                if !state.atoms.contains(r.head) && fires(r, &state.atoms) {
                    fresh.push(r.head);
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        fresh.sort_unstable();
        fresh.dedup();
        for id in fresh {
            state.atoms.insert(id);
            report.derived.push(id);
        }
    }
    finish_evaluation(sys, state, report)
}

/// Applies every evaluation rule once, children before parents.
pub fn evaluate_single_pass(sys: &RuleSystem, state: &mut MonitorState) -> Result<EvalReport, EngineError> {
    state.expect(Phase::Ingested)?;
    let mut report = EvalReport {
        rounds: 1,
        ..EvalReport::default()
    };
    for node in 0..sys.table().len() {
        if !active(sys, &state.atoms, node) {
            continue;
        }
        for r in sys.eval_range(node) {
            if fires(r, &state.atoms) && state.atoms.insert(r.head) {
                report.derived.push(r.head);
            }
        }
    }
    finish_evaluation(sys, state, report)
}

pub fn evaluate(sys: &RuleSystem, state: &mut MonitorState, mode: EvalMode) -> Result<EvalReport, EngineError> {
    match mode {
        EvalMode::Fixpoint => evaluate_fixpoint(sys, state),
        EvalMode::SinglePass => evaluate_single_pass(sys, state),
    }
}

fn finish_evaluation(sys: &RuleSystem, state: &mut MonitorState, mut report: EvalReport) -> Result<EvalReport, EngineError> {
    let index = sys.atom_index();
    let success = state.atoms.contains(index.success());
    let failure = state.atoms.contains(index.failure());
    let verdict = match (success, failure) {
        (true, true) => return Err(EngineError::ConflictingVerdicts { cell: state.cell_index }),
        (true, false) => Some(Outcome::Success),
        (false, true) => Some(Outcome::Failure),
        (false, false) if state.at_end => return Err(EngineError::NoVerdict { cell: state.cell_index }),
        (false, false) => None,
    };
    state.verdict = verdict;
    state.phase = if verdict.is_some() { Phase::Halted } else { Phase::Evaluated };
    report.verdict = verdict;
    Ok(report)
}

/// Replaces the state with the output of the reactivation rules and moves to
/// the next cell.
pub fn react(sys: &RuleSystem, state: &mut MonitorState) -> Result<(), EngineError> {
    state.expect(Phase::Evaluated)?;
    state.atoms = fc_step_compiled(sys.compiled_react(), &state.atoms);
    state.cell_index += 1;
    state.phase = Phase::AwaitingCell;
    Ok(())
}

/// Result of feeding one cell to a [`Monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pending,
    Done(Verdict),
}

/// One cell of an evolution table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplainBlock {
    pub cell: usize,
    pub state: Vec<StateAtom>,
    /// Observations shown on the `+ obs` row, `END` included on the last cell.
    pub observations: Vec<String>,
    /// Truth atoms derived in the cell, followed by the verdict if any.
    pub eval: Vec<StateAtom>,
    /// State after reactivation, or `None` when the monitor halted.
    pub react: Option<Vec<StateAtom>>,
    pub verdict: Option<Outcome>,
}

impl ExplainBlock {
    /// The four rows of the block as `(label, content)` pairs.
    pub fn rows(&self, sys: &RuleSystem) -> Vec<(&'static str, String)> {
        let show = |atoms: &[StateAtom]| -> Vec<String> {
            atoms
                .iter()
                .map(|a| a.render(sys.table(), AtomStyle::Evolution))
                .collect()
        };
        let state = show(&self.state);
        let mut with_obs = state.clone();
        with_obs.extend(self.observations.iter().cloned());
        let mut rows = vec![
            ("state", state.join(", ")),
            ("+ obs", with_obs.join(", ")),
            ("eval", show(&self.eval).join(", ")),
        ];
        match (&self.react, self.verdict) {
            (Some(next), _) => rows.push(("react", show(next).join(", "))),
            (None, Some(Outcome::Success)) => rows.push(("STOP", "PROPERTY SATISFIED".into())),
            (None, _) => rows.push(("STOP", "PROPERTY VIOLATED".into())),
        }
        rows
    }

    pub fn render(&self, sys: &RuleSystem, color: bool) -> String {
        let mut out = String::new();
        for (label, content) in self.rows(sys) {
            if color {
                out.push_str(&format!("\x1b[1m{label:>5}\x1b[0m | {content}\n"));
            } else {
                out.push_str(&format!("{label:>5} | {content}\n"));
            }
        }
        out
    }
}

/// A monitor over one rule system.
#[derive(Debug, Clone)]
pub struct Monitor<'a> {
    sys: &'a RuleSystem,
    state: MonitorState,
    mode: EvalMode,
    explain: Option<Vec<ExplainBlock>>,
}

impl<'a> Monitor<'a> {
    pub fn new(sys: &'a RuleSystem, mode: EvalMode) -> Self {
        Monitor {
            sys,
            state: MonitorState::initial(sys),
            mode,
            explain: None,
        }
    }

    /// Records an [`ExplainBlock`] per cell from now on.
    pub fn with_explain(mut self) -> Self {
        self.explain = Some(Vec::new());
        self
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn explain_blocks(&self) -> &[ExplainBlock] {
        self.explain.as_deref().unwrap_or(&[])
    }

    pub fn push(&mut self, cell: &Cell, is_last: bool) -> Result<Status, EngineError> {
        let sys = self.sys;
        let before = self.explain.is_some().then(|| self.state.to_atoms(sys));
        ingest_cell(sys, &mut self.state, cell, is_last)?;
        let report = evaluate(sys, &mut self.state, self.mode)?;
        let verdict = self.state.verdict();
        if verdict.is_none() {
            if let Some(blocks) = &mut self.explain {
                let mut block = explain_block(sys, &self.state, cell, before.unwrap_or_default(), &report);
                react(sys, &mut self.state)?;
                block.react = Some(self.state.to_atoms(sys));
                blocks.push(block);
            } else {
                react(sys, &mut self.state)?;
            }
        } else if let Some(blocks) = &mut self.explain {
            blocks.push(explain_block(sys, &self.state, cell, before.unwrap_or_default(), &report));
        }
        Ok(match verdict {
            Some(v) => Status::Done(v),
            None => Status::Pending,
        })
    }
}

fn explain_block(sys: &RuleSystem, state: &MonitorState, cell: &Cell, before: Vec<StateAtom>, report: &EvalReport) -> ExplainBlock {
    let index = sys.atom_index();
    let mut truths: Vec<AtomId> = report
        .derived
        .iter()
        .copied()
        .filter(|&id| matches!(index.decode(id), StateAtom::Truth(..)))
        .collect();
    truths.sort_unstable();
    let mut eval: Vec<StateAtom> = truths.into_iter().map(|id| index.decode(id)).collect();
    match report.verdict {
        Some(Outcome::Success) => eval.push(StateAtom::Success),
        Some(Outcome::Failure) => eval.push(StateAtom::Failure),
        None => {}
    }
    let mut observations: Vec<String> = cell.iter().cloned().collect();
    if state.at_end {
        observations.push("END".into());
    }
    ExplainBlock {
        cell: state.cell_index,
        state: before,
        observations,
        eval,
        react: None,
        verdict: report.verdict,
    }
}

/// Monitors a complete trace; the last cell carries the end marker.
pub fn monitor_trace(sys: &RuleSystem, trace: &Trace, mode: EvalMode) -> Result<Verdict, EngineError> {
    if trace.is_empty() {
        return Err(EngineError::EmptyTrace);
    }
    let mut m = Monitor::new(sys, mode);
    let n = trace.len();
    for (i, cell) in trace.cells.iter().enumerate() {
        if let Status::Done(v) = m.push(cell, i + 1 == n)? {
            return Ok(v);
        }
    }
    Err(EngineError::NoVerdict { cell: n })
}

/// Monitors cells pulled one at a time from `source`, which yields
/// `(cell, is_last)` pairs.
pub fn monitor_stream<I, E>(sys: &RuleSystem, mode: EvalMode, source: I) -> Result<Verdict, EngineError>
where
    I: IntoIterator<Item = Result<(Cell, bool), E>>,
    E: fmt::Display,
{
    let mut m = Monitor::new(sys, mode);
    for item in source {
        let cell_no = m.state().cell_index();
        let (cell, is_last) = item.map_err(|e| EngineError::Source {
            cell: cell_no,
            message: e.to_string(),
        })?;
        if let Status::Done(v) = m.push(&cell, is_last)? {
            return Ok(v);
        }
        if is_last {
            return Err(EngineError::NoVerdict { cell: cell_no });
        }
    }
    Err(EngineError::Unterminated {
        cell: m.state().cell_index() - 1,
    })
}
