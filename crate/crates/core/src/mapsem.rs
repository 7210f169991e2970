//! Translation of monitor states into FLTL judgements.
//!
//! A judgement is built from `⊤`, `⊥`, `⊔`, `⊓` and `[u,i ⊨ ψ]_F`. The map
//! walks the formula top-down: decided truth atoms short-circuit, otherwise
//! the qualifier of the node's undecided atom or activation picks the case.

use std::fmt;

use thiserror::Error;

use crate::atoms::{AtomId, AtomSet, Qualifier, StateAtom, TruthValue};
use crate::engine::{evaluate_single_pass, ingest_cell, react, EngineError, MonitorState, Phase};
use crate::formula::{Formula, NodeKind};
use crate::oracle::{lanes_and, lanes_or, oracle_eval, Cell, Lanes, Trace, NO_LANES};
use crate::rulegen::{initialise, RuleGenError, RuleSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("no activation or evaluation for {0}")]
    Missing(String),
    #[error("several qualifiers for {0}")]
    Ambiguous(String),
    #[error("{0} has no map case (eventually/always)")]
    Unsupported(String),
    #[error("until node {0} under qualifier {1:?}")]
    BadQualifier(String, Qualifier),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    RuleGen(#[from] RuleGenError),
}

/// `[u, index ⊨ formula]_F`. `node` is the subformula it talks about; with
/// `next` set the judgement is about `X node` instead.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Judge {
    pub index: usize,
    pub node: usize,
    pub next: bool,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Judgement {
    Top,
    Bottom,
    Judge(Judge),
    Join(Box<Judgement>, Box<Judgement>),
    Meet(Box<Judgement>, Box<Judgement>),
}

impl Judgement {
    pub fn join(l: Judgement, r: Judgement) -> Self {
        Judgement::Join(Box::new(l), Box::new(r))
    }

    pub fn meet(l: Judgement, r: Judgement) -> Self {
        Judgement::Meet(Box::new(l), Box::new(r))
    }

    /// Normal form under `⊤⊔x=⊤`, `⊥⊔x=x`, `⊥⊓x=⊥`, `⊤⊓x=x` and their
    /// mirror images.
    pub fn simplify(&self) -> Judgement {
        match self {
            Judgement::Join(l, r) => match (l.simplify(), r.simplify()) {
                (Judgement::Top, _) | (_, Judgement::Top) => Judgement::Top,
                (Judgement::Bottom, x) | (x, Judgement::Bottom) => x,
                (l, r) => Judgement::join(l, r),
            },
            Judgement::Meet(l, r) => match (l.simplify(), r.simplify()) {
                (Judgement::Bottom, _) | (_, Judgement::Bottom) => Judgement::Bottom,
                (Judgement::Top, x) | (x, Judgement::Top) => x,
                (l, r) => Judgement::meet(l, r),
            },
            other => other.clone(),
        }
    }

    /// Truth of the judgement on a complete trace.
    pub fn eval(&self, trace: &Trace) -> bool {
        match self {
            Judgement::Top => true,
            Judgement::Bottom => false,
            Judgement::Judge(j) => oracle_eval(&j.formula, trace, j.index).unwrap_or(false),
            Judgement::Join(l, r) => l.eval(trace) || r.eval(trace),
            Judgement::Meet(l, r) => l.eval(trace) && r.eval(trace),
        }
    }

    /// Lanes where the judgement holds, given per-node, per-position lanes
    /// of the monitored formula over a batch of traces of length `len`.
    pub fn eval_lanes(&self, evals: &[Vec<Lanes>], len: usize, live: Lanes) -> Lanes {
        match self {
            Judgement::Top => live,
            Judgement::Bottom => NO_LANES,
            Judgement::Judge(j) => {
                let p = j.index + j.next as usize;
                if p < len {
                    evals[j.node][p]
                } else {
                    NO_LANES
                }
            }
            Judgement::Join(l, r) => lanes_or(l.eval_lanes(evals, len, live), r.eval_lanes(evals, len, live)),
            Judgement::Meet(l, r) => lanes_and(l.eval_lanes(evals, len, live), r.eval_lanes(evals, len, live)),
        }
    }
}

impl fmt::Display for Judgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nested = |j: &Judgement| match j {
            Judgement::Join(..) | Judgement::Meet(..) => format!("({j})"),
            _ => j.to_string(),
        };
        match self {
            Judgement::Top => f.write_str("⊤"),
            Judgement::Bottom => f.write_str("⊥"),
            Judgement::Judge(j) => write!(f, "[u,{} ⊨ {}]_F", j.index, j.formula),
            Judgement::Join(l, r) => write!(f, "{} ⊔ {}", nested(l), nested(r)),
            Judgement::Meet(l, r) => write!(f, "{} ⊓ {}", nested(l), nested(r)),
        }
    }
}

/// Reading of the map case for an until node whose qualifier is `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UntilBMap {
    /// `map(ψ²) ⊓ [u,i ⊨ X(ψ¹ U ψ²)]_F`.
    #[default]
    AsPrinted,
    /// `map(ψ²) ⊔ (map(ψ¹) ⊓ [u,i ⊨ X(ψ¹ U ψ²)]_F)`.
    Unfolding,
}

/// Maps a state of `sys` at trace position `index` to a judgement.
pub fn map_state(sys: &RuleSystem, atoms: &AtomSet, index: usize, variant: UntilBMap) -> Result<Judgement, MapError> {
    let ix = sys.atom_index();
    if atoms.contains(ix.success()) {
        return Ok(Judgement::Top);
    }
    if atoms.contains(ix.failure()) {
        return Ok(Judgement::Bottom);
    }
    map_node(sys, atoms, sys.table().root(), index, variant)
}

fn qualifier_of(sys: &RuleSystem, atoms: &AtomSet, node: usize) -> Result<Qualifier, MapError> {
    let ix = sys.atom_index();
    let name = || sys.table().formula(node).to_string();
    let pick = |ids: &mut dyn Iterator<Item = (Qualifier, AtomId)>| -> Result<Option<Qualifier>, MapError> {
        let found: Vec<Qualifier> = ids.filter(|(_, id)| atoms.contains(*id)).map(|(q, _)| q).collect();
        match found.len() {
            0 => Ok(None),
            1 => Ok(Some(found[0])),
            _ => Err(MapError::Ambiguous(name())),
        }
    };
    let undecided = pick(&mut Qualifier::ALL.iter().map(|&q| (q, ix.truth(node, TruthValue::U, q))))?;
    if let Some(q) = undecided {
        return Ok(q);
    }
    pick(&mut Qualifier::ALL.iter().map(|&q| (q, ix.act(node, q))))?.ok_or_else(|| MapError::Missing(name()))
}

fn map_node(sys: &RuleSystem, atoms: &AtomSet, node: usize, index: usize, variant: UntilBMap) -> Result<Judgement, MapError> {
    let ix = sys.atom_index();
    if atoms.contains(ix.truth(node, TruthValue::T, Qualifier::None)) {
        return Ok(Judgement::Top);
    }
    if atoms.contains(ix.truth(node, TruthValue::F, Qualifier::None)) {
        return Ok(Judgement::Bottom);
    }
    let aux = qualifier_of(sys, atoms, node)?;
    let table = sys.table();
    let judge = |next: bool| {
        let f = table.formula(node).clone();
        Judgement::Judge(Judge {
            index,
            node,
            next,
            formula: if next { Formula::next(f) } else { f },
        })
    };
    let map = |n: usize| map_node(sys, atoms, n, index, variant);
    Ok(match table.node(node).kind {
        NodeKind::True | NodeKind::End | NodeKind::Atom(_) | NodeKind::NegAtom(_) => judge(false),
        NodeKind::Or(l, r) | NodeKind::And(l, r) | NodeKind::Until(l, r) if aux == Qualifier::L || aux == Qualifier::R => {
            map(if aux == Qualifier::L { l } else { r })?
        }
        NodeKind::Or(l, r) if aux == Qualifier::B => Judgement::join(map(l)?, map(r)?),
        NodeKind::And(l, r) if aux == Qualifier::B => Judgement::meet(map(l)?, map(r)?),
        NodeKind::Until(l, r) if aux == Qualifier::A => Judgement::join(map(r)?, Judgement::meet(map(l)?, judge(true))),
        NodeKind::Until(l, r) if aux == Qualifier::B => match variant {
            UntilBMap::AsPrinted => Judgement::meet(map(r)?, judge(true)),
            UntilBMap::Unfolding => Judgement::join(map(r)?, Judgement::meet(map(l)?, judge(true))),
        },
        NodeKind::Next(c) | NodeKind::WeakNext(c) if aux == Qualifier::M => map(c)?,
        NodeKind::Next(_) | NodeKind::WeakNext(_) => judge(false),
        NodeKind::Eventually(_) | NodeKind::Always(_) => {
            return Err(MapError::Unsupported(table.formula(node).to_string()))
        }
        _ => return Err(MapError::BadQualifier(table.formula(node).to_string(), aux)),
    })
}

/// One intermediate state of a monitoring run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRow {
    /// 1-based cell being processed.
    pub cell: usize,
    pub atoms: AtomSet,
    /// Observations shown with the state, empty before ingestion.
    pub observations: Vec<String>,
    /// Whether this row starts a new cell after reactivation.
    pub after_react: bool,
}

/// Intermediate states of one cell: the `+ obs` state and one state per
/// derived atom in sweep order. `REPEAT` is internal and not shown; a verdict
/// row holds only the verdict. Returns the evaluated state.
pub fn cell_rows(
    sys: &RuleSystem,
    state: &MonitorState,
    cell: &Cell,
    is_last: bool,
) -> Result<(Vec<ChainRow>, MonitorState), EngineError> {
    let mut st = state.clone();
    ingest_cell(sys, &mut st, cell, is_last)?;
    let ingested = st.atoms().clone();
    let report = evaluate_single_pass(sys, &mut st)?;
    let observations: Vec<String> = cell.iter().cloned().collect();
    let rows = rows_from(sys, st.cell_index(), &ingested, &report.derived, &observations);
    Ok((rows, st))
}

/// Rows for a cell given the state right after ingestion and the atoms a
/// single-pass evaluation derived from it, in order.
pub fn rows_from(
    sys: &RuleSystem,
    cell: usize,
    ingested: &AtomSet,
    derived: &[AtomId],
    observations: &[String],
) -> Vec<ChainRow> {
    let ix = sys.atom_index();
    let mut atoms = ingested.clone();
    let mut rows = vec![ChainRow {
        cell,
        atoms: atoms.clone(),
        observations: observations.to_vec(),
        after_react: false,
    }];
    for &id in derived {
        if id == ix.repeat() {
            continue;
        }
        if id == ix.success() || id == ix.failure() {
            let mut only = AtomSet::with_universe(ix.universe());
            only.insert(id);
            rows.push(ChainRow {
                cell,
                atoms: only,
                observations: vec![],
                after_react: false,
            });
            continue;
        }
        atoms.insert(id);
        rows.push(ChainRow {
            cell,
            atoms: atoms.clone(),
            observations: observations.to_vec(),
            after_react: false,
        });
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// First row of the chain.
    Start,
    Same,
    /// Equal after lattice simplification.
    Simplification,
    /// Crossing a reactivation: the index moves one cell on.
    IndexIncrement,
    /// A subjudgement replaced by its value or unfolded.
    Rewriting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStep {
    pub row: ChainRow,
    pub judgement: Result<Judgement, MapError>,
    pub kind: StepKind,
    /// The judgement has the same truth value on the trace as the previous
    /// one (and therefore as the monitored formula at position 0).
    pub valid: bool,
}

impl ChainStep {
    pub fn render_state(&self, sys: &RuleSystem) -> String {
        let atoms: Vec<StateAtom> = self.row.atoms.iter().map(|id| sys.atom_index().decode(id)).collect();
        let show = |a: &StateAtom| a.render(sys.table(), crate::atoms::AtomStyle::Evolution);
        let mut parts: Vec<String> = atoms
            .iter()
            .filter(|a| matches!(a, StateAtom::RuleAct(..)))
            .map(show)
            .collect();
        parts.extend(self.row.observations.iter().cloned());
        parts.extend(atoms.iter().filter(|a| matches!(a, StateAtom::Truth(..))).map(show));
        parts.extend(
            atoms
                .iter()
                .filter(|a| matches!(a, StateAtom::Success | StateAtom::Failure))
                .map(show),
        );
        parts.join(", ")
    }

    pub fn render_judgement(&self) -> String {
        match &self.judgement {
            Ok(j) => j.to_string(),
            Err(e) => format!("error: {e}"),
        }
    }
}

/// Result of [`check_rewriting_chain`].
#[derive(Debug, Clone)]
pub struct Chain {
    pub steps: Vec<ChainStep>,
    pub verdict: Option<crate::engine::Verdict>,
}

impl Chain {
    pub fn all_valid(&self) -> bool {
        self.steps.iter().all(|s| s.valid)
    }

    /// The last judgement is `⊤` for SUCCESS and `⊥` for FAILURE.
    pub fn final_matches_verdict(&self) -> bool {
        use crate::engine::Outcome;
        match (self.steps.last().map(|s| &s.judgement), self.verdict) {
            (Some(Ok(Judgement::Top)), Some(v)) => v.outcome == Outcome::Success,
            (Some(Ok(Judgement::Bottom)), Some(v)) => v.outcome == Outcome::Failure,
            _ => false,
        }
    }
}

/// Runs the monitor for `f` over `trace` and maps every intermediate state.
pub fn check_rewriting_chain(f: &Formula, trace: &Trace, variant: UntilBMap) -> Result<Chain, MapError> {
    let sys = initialise(f)?;
    check_rewriting_chain_with(&sys, trace, variant)
}

pub fn check_rewriting_chain_with(sys: &RuleSystem, trace: &Trace, variant: UntilBMap) -> Result<Chain, MapError> {
    if trace.is_empty() {
        return Err(EngineError::EmptyTrace.into());
    }
    let truth = oracle_eval(sys.formula(), trace, 0).unwrap_or(false);
    let mut state = MonitorState::initial(sys);
    let mut steps: Vec<ChainStep> = Vec::new();
    let mut verdict = None;
    let n = trace.len();
    for (i, cell) in trace.cells.iter().enumerate() {
        let mut rows = vec![ChainRow {
            cell: i + 1,
            atoms: state.atoms().clone(),
            observations: vec![],
            after_react: i > 0,
        }];
        let (cell_rows, evaluated) = cell_rows(sys, &state, cell, i + 1 == n)?;
        rows.extend(cell_rows);
        for row in rows {
            let judgement = map_state(sys, &row.atoms, row.cell - 1, variant);
            let kind = match (steps.last().map(|s: &ChainStep| &s.judgement), &judgement) {
                (None, _) => StepKind::Start,
                (_, _) if row.after_react => StepKind::IndexIncrement,
                (Some(Ok(prev)), Ok(cur)) if prev == cur => StepKind::Same,
                (Some(Ok(prev)), Ok(cur)) if prev.simplify() == cur.simplify() => StepKind::Simplification,
                _ => StepKind::Rewriting,
            };
            let valid = matches!(&judgement, Ok(j) if j.eval(trace) == truth);
            steps.push(ChainStep {
                row,
                judgement,
                kind,
                valid,
            });
        }
        state = evaluated;
        if state.phase() == Phase::Halted {
            verdict = state.verdict();
            break;
        }
        react(sys, &mut state)?;
    }
    Ok(Chain { steps, verdict })
}
