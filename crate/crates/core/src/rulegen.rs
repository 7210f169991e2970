//! Compilation of an NNF formula into a rule system: evaluation rules,
//! reactivation rules and an initial state.
//!
//! Every operator has an evaluation table. One table cell becomes one
//! generated evaluation rule; a cell whose input asks for an undecided
//! operand is materialized as one Horn clause per qualifier that operand can
//! carry, since clause bodies match atoms exactly. Reactivation rules with
//! several head atoms are split into one Horn clause per head.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use crate::atoms::{AtomStyle, Qualifier, StateAtom, TruthValue};
use crate::atoms::{AtomId, AtomIndex};
use crate::formula::{post_order, Formula, FormulaError, NodeKind, SubformulaTable};

use Qualifier as Q;
use TruthValue::{F, T, U};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleGenError {
    #[error("unknown operator kind '{0}'")]
    UnknownOp(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Main operator of a node, as far as evaluation tables are concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    True,
    End,
    Atom,
    NegAtom,
    Or,
    And,
    Until,
    Next,
    WeakNext,
    Eventually,
    Always,
}

impl OpKind {
    pub fn of(kind: &NodeKind) -> OpKind {
        match kind {
            NodeKind::True => OpKind::True,
            NodeKind::End => OpKind::End,
            NodeKind::Atom(_) => OpKind::Atom,
            NodeKind::NegAtom(_) => OpKind::NegAtom,
            NodeKind::Or(..) => OpKind::Or,
            NodeKind::And(..) => OpKind::And,
            NodeKind::Until(..) => OpKind::Until,
            NodeKind::Next(_) => OpKind::Next,
            NodeKind::WeakNext(_) => OpKind::WeakNext,
            NodeKind::Eventually(_) => OpKind::Eventually,
            NodeKind::Always(_) => OpKind::Always,
        }
    }

    pub const ALL: [OpKind; 11] = [
        OpKind::True,
        OpKind::End,
        OpKind::Atom,
        OpKind::NegAtom,
        OpKind::Or,
        OpKind::And,
        OpKind::Until,
        OpKind::Next,
        OpKind::WeakNext,
        OpKind::Eventually,
        OpKind::Always,
    ];

    pub fn arity(self) -> usize {
        match self {
            OpKind::True | OpKind::End | OpKind::Atom | OpKind::NegAtom => 0,
            OpKind::Or | OpKind::And | OpKind::Until => 2,
            _ => 1,
        }
    }

    /// Activation qualifiers the operator can be monitored under.
    pub fn modes(self) -> &'static [Qualifier] {
        match self {
            OpKind::Or | OpKind::And => &[Q::B, Q::L, Q::R],
            OpKind::Until => &[Q::A, Q::B, Q::L, Q::R],
            OpKind::Next | OpKind::WeakNext => &[Q::None, Q::M],
            _ => &[Q::None],
        }
    }

    /// Qualifier of the activation placed in the initial state.
    pub fn initial_mode(self) -> Qualifier {
        match self {
            OpKind::Or | OpKind::And => Q::B,
            OpKind::Until => Q::A,
            _ => Q::None,
        }
    }

    /// Qualifiers that accompany an undecided result of this operator.
    pub fn undecided_qualifiers(self) -> Vec<Qualifier> {
        let set: BTreeSet<Qualifier> = build_tables(self)
            .into_iter()
            .filter(|c| c.output == U)
            .map(|c| c.output_qualifier)
            .collect();
        set.into_iter().collect()
    }
}

impl FromStr for OpKind {
    type Err = RuleGenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "true" => OpKind::True,
            "END" | "end" => OpKind::End,
            "atom" => OpKind::Atom,
            "neg-atom" => OpKind::NegAtom,
            "or" | "|" => OpKind::Or,
            "and" | "&" => OpKind::And,
            "until" | "U" => OpKind::Until,
            "next" | "X" => OpKind::Next,
            "weak-next" | "W" => OpKind::WeakNext,
            "eventually" | "F" => OpKind::Eventually,
            "always" | "G" => OpKind::Always,
            other => return Err(RuleGenError::UnknownOp(other.to_string())),
        })
    }
}

/// One input condition of an evaluation-table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// Operand 0 or 1 has the given truth value (any qualifier when `U`).
    Operand(usize, TruthValue),
    Observed,
    NotObserved,
    End,
    NotEnd,
}

/// A cell of an evaluation table: under activation `mode`, when every
/// condition holds, the node evaluates to `output` with `output_qualifier`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCell {
    pub mode: Qualifier,
    pub conditions: Vec<Condition>,
    pub output: TruthValue,
    pub output_qualifier: Qualifier,
}

fn cell(mode: Qualifier, conditions: &[Condition], output: TruthValue, q: Qualifier) -> TableCell {
    TableCell {
        mode,
        conditions: conditions.to_vec(),
        output,
        output_qualifier: q,
    }
}

use Condition::{End as AtEnd, NotEnd as Going, NotObserved, Observed, Operand as Op};

fn disjunction_tables(mode_dominant: TruthValue) -> Vec<TableCell> {
    // Disjunction is dominated by T, conjunction (its dual) by F.
    let dominant = mode_dominant;
    let neutral = if dominant == T { F } else { T };
    let mut cells = Vec::new();
    for l in [T, U, F] {
        for r in [T, U, F] {
            let (out, q) = if l == dominant || r == dominant {
                (dominant, Q::None)
            } else {
                match (l == U, r == U) {
                    (true, true) => (U, Q::B),
                    (true, false) => (U, Q::L),
                    (false, true) => (U, Q::R),
                    (false, false) => (neutral, Q::None),
                }
            };
            cells.push(cell(Q::B, &[Op(0, l), Op(1, r)], out, q));
        }
    }
    for (mode, side) in [(Q::L, 0), (Q::R, 1)] {
        cells.push(cell(mode, &[Op(side, T)], T, Q::None));
        cells.push(cell(mode, &[Op(side, U)], U, mode));
        cells.push(cell(mode, &[Op(side, F)], F, Q::None));
    }
    cells
}

/// Cells of a binary until table for the activation `mode` (`A` or `B`).
///
/// Mode `A` evaluates `l U r` from scratch. Mode `B` is reached when the
/// right operand failed while the left one was still undecided: the left
/// operand's pending obligation must hold and the until restarts.
fn until_tables() -> Vec<TableCell> {
    let mut cells = Vec::new();
    // Mode A: r true wins, l and r false loses.
    for l in [T, U, F] {
        cells.push(cell(Q::A, &[Op(0, l), Op(1, T)], T, Q::None));
    }
    cells.push(cell(Q::A, &[Op(0, F), Op(1, F)], F, Q::None));
    cells.push(cell(Q::A, &[Op(0, U), Op(1, F)], U, Q::None));
    cells.push(cell(Q::A, &[Op(0, F), Op(1, U)], U, Q::R));
    for (l, r, q) in [(T, F, Q::A), (U, F, Q::B), (T, U, Q::A), (U, U, Q::A)] {
        cells.push(cell(Q::A, &[Op(0, l), Op(1, r), Going], U, q));
        cells.push(cell(Q::A, &[Op(0, l), Op(1, r), AtEnd], F, Q::None));
    }
    cells.retain(|c| !(c.conditions == [Op(0, U), Op(1, F)] && c.output_qualifier == Q::None));
    // Mode B: the left operand must hold now.
    for r in [T, U, F] {
        cells.push(cell(Q::B, &[Op(0, F), Op(1, r)], F, Q::None));
    }
    cells.push(cell(Q::B, &[Op(0, T), Op(1, T)], T, Q::None));
    cells.push(cell(Q::B, &[Op(0, U), Op(1, T)], U, Q::L));
    for (l, r, q) in [(T, F, Q::A), (T, U, Q::A), (U, F, Q::B), (U, U, Q::B)] {
        cells.push(cell(Q::B, &[Op(0, l), Op(1, r), Going], U, q));
        cells.push(cell(Q::B, &[Op(0, l), Op(1, r), AtEnd], F, Q::None));
    }
    for (mode, side) in [(Q::L, 0), (Q::R, 1)] {
        cells.push(cell(mode, &[Op(side, T)], T, Q::None));
        cells.push(cell(mode, &[Op(side, U)], U, mode));
        cells.push(cell(mode, &[Op(side, F)], F, Q::None));
    }
    cells
}

fn next_tables(at_end: TruthValue) -> Vec<TableCell> {
    vec![
        cell(Q::None, &[Going], U, Q::None),
        cell(Q::None, &[AtEnd], at_end, Q::None),
        cell(Q::M, &[Op(0, T)], T, Q::None),
        cell(Q::M, &[Op(0, U)], U, Q::M),
        cell(Q::M, &[Op(0, F)], F, Q::None),
    ]
}

/// Every evaluation-table cell of `op`, across all of its activation modes.
pub fn build_tables(op: OpKind) -> Vec<TableCell> {
    match op {
        OpKind::Atom => vec![
            cell(Q::None, &[Observed], T, Q::None),
            cell(Q::None, &[NotObserved], F, Q::None),
        ],
        OpKind::NegAtom => vec![
            cell(Q::None, &[Observed], F, Q::None),
            cell(Q::None, &[NotObserved], T, Q::None),
        ],
        OpKind::True => vec![
            cell(Q::None, &[Going], T, Q::None),
            cell(Q::None, &[AtEnd], T, Q::None),
        ],
        OpKind::End => vec![
            cell(Q::None, &[AtEnd], T, Q::None),
            cell(Q::None, &[Going], F, Q::None),
        ],
        OpKind::Or => disjunction_tables(T),
        OpKind::And => disjunction_tables(F),
        OpKind::Until => until_tables(),
        OpKind::Next => next_tables(F),
        OpKind::WeakNext => next_tables(T),
        OpKind::Eventually => vec![
            cell(Q::None, &[Op(0, T)], T, Q::None),
            cell(Q::None, &[Op(0, U), Going], U, Q::None),
            cell(Q::None, &[Op(0, F), Going], U, Q::None),
            cell(Q::None, &[Op(0, U), AtEnd], F, Q::None),
            cell(Q::None, &[Op(0, F), AtEnd], F, Q::None),
        ],
        OpKind::Always => vec![
            cell(Q::None, &[Op(0, F)], F, Q::None),
            cell(Q::None, &[Op(0, U), Going], U, Q::None),
            cell(Q::None, &[Op(0, T), Going], U, Q::K),
            cell(Q::None, &[Op(0, T), AtEnd], T, Q::None),
            cell(Q::None, &[Op(0, U), AtEnd], F, Q::None),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Evaluation,
    Reactivation,
}

/// A Horn clause in implication form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub body: Vec<StateAtom>,
    pub head: StateAtom,
    pub stage: Stage,
    /// Post-order index of the node whose table or reactivation produced it.
    pub owner: usize,
    /// Index of the generated rule (table cell, verdict rule or reactivation
    /// rule) this clause was materialized from.
    pub origin: usize,
}

impl Rule {
    pub fn render(&self, table: &SubformulaTable) -> String {
        let body: Vec<String> = self
            .body
            .iter()
            .map(|a| a.render(table, AtomStyle::Rules))
            .collect();
        format!("{} -> {}", body.join(" & "), self.head.render(table, AtomStyle::Rules))
    }

    pub fn is_verdict_rule(&self) -> bool {
        matches!(self.head, StateAtom::Success | StateAtom::Failure | StateAtom::Repeat)
    }
}

/// Clause compiled against an [`AtomIndex`]: at most four body atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompiledRule {
    body: [AtomId; 4],
    len: u8,
    pub head: AtomId,
}

impl CompiledRule {
    pub fn body(&self) -> &[AtomId] {
        &self.body[..self.len as usize]
    }
}

/// An evaluation-, reactivation- and initial-state triple for one formula.
#[derive(Debug, Clone)]
pub struct RuleSystem {
    table: SubformulaTable,
    eval_rules: Vec<Rule>,
    react_rules: Vec<Rule>,
    initial_state: Vec<StateAtom>,
    generated: usize,
    index: AtomIndex,
    compiled_eval: Vec<CompiledRule>,
    compiled_react: Vec<CompiledRule>,
    /// `eval_ranges[n]`: slice of `compiled_eval` owned by node `n`.
    eval_ranges: Vec<(u32, u32)>,
    /// `react_by_trigger[n]`: slice of `compiled_react` owned by node `n`.
    react_ranges: Vec<(u32, u32)>,
}

impl RuleSystem {
    pub fn table(&self) -> &SubformulaTable {
        &self.table
    }

    pub fn formula(&self) -> &Formula {
        self.table.root_formula()
    }

    pub fn eval_rules(&self) -> &[Rule] {
        &self.eval_rules
    }

    pub fn react_rules(&self) -> &[Rule] {
        &self.react_rules
    }

    pub fn initial_state(&self) -> &[StateAtom] {
        &self.initial_state
    }

    pub fn atom_index(&self) -> &AtomIndex {
        &self.index
    }

    pub fn compiled_eval(&self) -> &[CompiledRule] {
        &self.compiled_eval
    }

    pub fn compiled_react(&self) -> &[CompiledRule] {
        &self.compiled_react
    }

    pub fn eval_range(&self, node: usize) -> &[CompiledRule] {
        let (s, e) = self.eval_ranges[node];
        &self.compiled_eval[s as usize..e as usize]
    }

    pub fn react_range(&self, node: usize) -> &[CompiledRule] {
        let (s, e) = self.react_ranges[node];
        &self.compiled_react[s as usize..e as usize]
    }

    /// Number of generated rules: table cells, verdict rules and
    /// reactivation rules, each counted once however many Horn clauses it
    /// expands to.
    pub fn rule_count(&self) -> usize {
        self.generated
    }

    /// Number of materialized Horn clauses.
    pub fn horn_clause_count(&self) -> usize {
        self.eval_rules.len() + self.react_rules.len()
    }

    /// The same system with its evaluation rules replaced, e.g. to inject a
    /// faulty table cell. Rules must stay grouped by owner in post-order.
    pub fn with_eval_rules(&self, eval_rules: Vec<Rule>) -> RuleSystem {
        assemble(
            self.table.clone(),
            eval_rules,
            self.react_rules.clone(),
            self.initial_state.clone(),
            self.generated,
        )
    }

    /// Line-oriented dump: `# EVALUATION`, `# REACTIVATION`, `# INITIAL`.
    pub fn dump(&self) -> String {
        let mut out = String::from("# EVALUATION\n");
        for r in &self.eval_rules {
            out.push_str(&r.render(&self.table));
            out.push('\n');
        }
        out.push_str("# REACTIVATION\n");
        for r in &self.react_rules {
            out.push_str(&r.render(&self.table));
            out.push('\n');
        }
        out.push_str("# INITIAL\n");
        for a in &self.initial_state {
            out.push_str(&a.render(&self.table, AtomStyle::Rules));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for RuleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// Upper bound on generated rules per formula node: the until table (32
/// cells) and its four reactivation rules, plus three verdict rules once.
pub const RULES_PER_NODE: usize = 36;
pub const VERDICT_RULES: usize = 3;

/// Builds the rule system for an NNF formula.
pub fn initialise(f: &Formula) -> Result<RuleSystem, RuleGenError> {
    let table = post_order(f)?;
    Ok(initialise_table(table))
}

/// Generated-rule count of `f`'s rule system.
pub fn rule_count(f: &Formula) -> Result<usize, RuleGenError> {
    Ok(initialise(f)?.rule_count())
}

pub fn initialise_table(table: SubformulaTable) -> RuleSystem {
    let root = table.root();
    let mut eval_rules = Vec::new();
    let mut react_rules = Vec::new();
    let mut generated = 0usize;
    let mut states: Vec<Vec<StateAtom>> = Vec::with_capacity(table.len());

    for node in table.nodes() {
        let n = node.index;
        let op = OpKind::of(&node.kind);
        let children = node.kind.children();
        let child_undecided: Vec<Vec<Qualifier>> = children
            .iter()
            .map(|&c| OpKind::of(&table.node(c).kind).undecided_qualifiers())
            .collect();

        // Evaluation rules, one generated rule per table cell.
        for tc in build_tables(op) {
            let origin = generated;
            generated += 1;
            let head = StateAtom::Truth(n, tc.output, tc.output_qualifier);
            for body in expand_cell(n, &node.kind, &tc, &children, &child_undecided) {
                eval_rules.push(Rule {
                    body,
                    head: head.clone(),
                    stage: Stage::Evaluation,
                    owner: n,
                    origin,
                });
            }
        }
        if n == root {
            let verdicts = [
                (T, StateAtom::Success),
                (F, StateAtom::Failure),
                (U, StateAtom::Repeat),
            ];
            for (v, head) in verdicts {
                let origin = generated;
                generated += 1;
                let quals = if v == U {
                    op.undecided_qualifiers()
                } else {
                    vec![Q::None]
                };
                for q in quals {
                    eval_rules.push(Rule {
                        body: vec![StateAtom::Truth(n, v, q)],
                        head: head.clone(),
                        stage: Stage::Evaluation,
                        owner: n,
                        origin,
                    });
                }
            }
        }

        // Initial state of this subsystem.
        let own = StateAtom::RuleAct(n, op.initial_mode());
        let sub = |i: usize| states[children[i]].clone();
        let state: Vec<StateAtom> = match op {
            OpKind::Or | OpKind::And | OpKind::Until => {
                let mut s = sub(0);
                s.extend(sub(1));
                s.push(own);
                s
            }
            OpKind::Eventually | OpKind::Always => {
                let mut s = sub(0);
                s.push(own);
                s
            }
            _ => vec![own],
        };

        // Reactivation rules: trigger qualifier, activation mode, restarts
        // the operand subsystems.
        let restart_all: Vec<StateAtom> = children.iter().flat_map(|&c| states[c].clone()).collect();
        let react: Vec<(Qualifier, Qualifier, Vec<StateAtom>)> = match op {
            OpKind::Or | OpKind::And => [Q::B, Q::L, Q::R].iter().map(|&z| (z, z, vec![])).collect(),
            OpKind::Until => vec![
                (Q::A, Q::A, restart_all.clone()),
                (Q::B, Q::B, restart_all.clone()),
                (Q::L, Q::L, vec![]),
                (Q::R, Q::R, vec![]),
            ],
            OpKind::Eventually => vec![(Q::None, Q::None, restart_all.clone())],
            OpKind::Always => vec![
                (Q::None, Q::None, restart_all.clone()),
                (Q::K, Q::None, restart_all.clone()),
            ],
            OpKind::Next | OpKind::WeakNext => vec![
                (Q::None, Q::M, restart_all.clone()),
                (Q::M, Q::M, vec![]),
            ],
            OpKind::True | OpKind::End | OpKind::Atom | OpKind::NegAtom => vec![],
        };
        for (trigger, mode, restart) in react {
            let origin = generated;
            generated += 1;
            let body = vec![StateAtom::Truth(n, U, trigger)];
            let mut heads = vec![StateAtom::RuleAct(n, mode)];
            heads.extend(restart);
            for head in heads {
                react_rules.push(Rule {
                    body: body.clone(),
                    head,
                    stage: Stage::Reactivation,
                    owner: n,
                    origin,
                });
            }
        }
        states.push(state);
    }

    let initial_state = states.pop().unwrap_or_default();
    assemble(table, eval_rules, react_rules, initial_state, generated)
}

fn assemble(
    table: SubformulaTable,
    eval_rules: Vec<Rule>,
    react_rules: Vec<Rule>,
    initial_state: Vec<StateAtom>,
    generated: usize,
) -> RuleSystem {
    let index = AtomIndex::new(&table);
    let compile = |rules: &[Rule]| -> (Vec<CompiledRule>, Vec<(u32, u32)>) {
        let mut ranges = vec![(0u32, 0u32); table.len()];
        let mut out = Vec::with_capacity(rules.len());
        for (i, r) in rules.iter().enumerate() {
            let mut body = [0; 4];
            for (slot, atom) in body.iter_mut().zip(&r.body) {
                *slot = index.encode(atom).expect("rule atoms are in the index");
            }
            out.push(CompiledRule {
                body,
                len: r.body.len() as u8,
                head: index.encode(&r.head).expect("rule atoms are in the index"),
            });
            let range = &mut ranges[r.owner];
            if range.1 == range.0 {
                range.0 = i as u32;
            }
            range.1 = i as u32 + 1;
        }
        (out, ranges)
    };
    let (compiled_eval, eval_ranges) = compile(&eval_rules);
    let (compiled_react, react_ranges) = compile(&react_rules);
    RuleSystem {
        table,
        eval_rules,
        react_rules,
        initial_state,
        generated,
        index,
        compiled_eval,
        compiled_react,
        eval_ranges,
        react_ranges,
    }
}

/// Horn-clause bodies for one table cell of node `n`.
fn expand_cell(
    n: usize,
    kind: &NodeKind,
    tc: &TableCell,
    children: &[usize],
    child_undecided: &[Vec<Qualifier>],
) -> Vec<Vec<StateAtom>> {
    let mut bodies: Vec<Vec<StateAtom>> = vec![vec![StateAtom::RuleAct(n, tc.mode)]];
    let symbol = match kind {
        NodeKind::Atom(a) | NodeKind::NegAtom(a) => Some(a.clone()),
        _ => None,
    };
    for cond in &tc.conditions {
        let options: Vec<StateAtom> = match *cond {
            Condition::Observed => vec![StateAtom::ObsPresent(symbol.clone().unwrap_or_default())],
            Condition::NotObserved => vec![StateAtom::ObsAbsent(symbol.clone().unwrap_or_default())],
            Condition::End => vec![StateAtom::EndMarker],
            Condition::NotEnd => vec![StateAtom::NotEnd],
            Condition::Operand(i, U) => child_undecided[i]
                .iter()
                .map(|&q| StateAtom::Truth(children[i], U, q))
                .collect(),
            Condition::Operand(i, v) => vec![StateAtom::Truth(children[i], v, Q::None)],
        };
        bodies = bodies
            .into_iter()
            .flat_map(|b| {
                options.iter().map(move |o| {
                    let mut b = b.clone();
                    b.push(o.clone());
                    b
                })
            })
            .collect();
    }
    bodies
}
