//! Brute-force FLTL semantics over complete finite traces.
//!
//! This is the ground truth the rule-based monitor is checked against. It
//! works on [`Formula`] trees directly and shares no code with the rule
//! generator or the chaining engine.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::formula::{Formula, NodeKind, SubformulaTable};

/// One trace position: the set of observations made simultaneously.
pub type Cell = BTreeSet<String>;

/// A complete finite trace. The last cell implicitly carries the END marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Trace {
    pub cells: Vec<Cell>,
}

impl Trace {
    pub fn new(cells: Vec<Cell>) -> Self {
        Trace { cells }
    }

    /// Builds a trace from per-cell observation lists.
    pub fn from_slices(cells: &[&[&str]]) -> Self {
        Trace {
            cells: cells
                .iter()
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn prefix(&self, k: usize) -> Trace {
        Trace {
            cells: self.cells[..k.min(self.cells.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("index {index} out of range for trace of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("extension enumeration needs {needed} traces, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("prefix length {k} exceeds trace length {len}")]
    PrefixTooLong { k: usize, len: usize },
}

/// Truth of `f` on `u` at position `i`.
pub fn oracle_eval(f: &Formula, u: &Trace, i: usize) -> Result<bool, OracleError> {
    if i >= u.len() {
        return Err(OracleError::IndexOutOfRange {
            index: i,
            len: u.len(),
        });
    }
    Ok(eval_at(f, u, i))
}

fn eval_at(f: &Formula, u: &Trace, i: usize) -> bool {
    let n = u.len();
    match f {
        Formula::True => true,
        Formula::End => i + 1 == n,
        Formula::Atom(a) => u.cells[i].contains(a),
        Formula::NegAtom(a) => !u.cells[i].contains(a),
        Formula::Not(g) => !eval_at(g, u, i),
        Formula::Or(l, r) => eval_at(l, u, i) || eval_at(r, u, i),
        Formula::And(l, r) => eval_at(l, u, i) && eval_at(r, u, i),
        Formula::Next(g) => i + 1 < n && eval_at(g, u, i + 1),
        Formula::WeakNext(g) => i + 1 >= n || eval_at(g, u, i + 1),
        Formula::Until(l, r) => {
            (i..n).any(|k| eval_at(r, u, k) && (i..k).all(|j| eval_at(l, u, j)))
        }
        Formula::Eventually(g) => (i..n).any(|k| eval_at(g, u, k)),
        Formula::Always(g) => (i..n).all(|k| eval_at(g, u, k)),
    }
}

/// Whether a judgement is fixed no matter how the trace continues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Irrevocability {
    AlwaysTrue,
    AlwaysFalse,
    Varies,
}

/// Bounds of the extension space explored by [`oracle_irrevocable_with`].
#[derive(Debug, Clone)]
pub struct ExtensionSpace {
    pub alphabet: Vec<String>,
    /// Fewest cells appended to the prefix.
    pub min_extra: usize,
    /// Most cells appended to the prefix.
    pub horizon: usize,
    /// Upper bound on the number of complete traces enumerated.
    pub budget: u128,
}

pub const DEFAULT_EXTENSION_BUDGET: u128 = 1 << 22;

/// Evaluates `f` at index 0 over every extension of the first `k` cells of
/// `prefix` by 0..=`horizon` cells drawn from the subsets of `alphabet`.
pub fn oracle_irrevocable(
    f: &Formula,
    prefix: &Trace,
    k: usize,
    alphabet: &[&str],
    horizon: usize,
) -> Result<Irrevocability, OracleError> {
    let space = ExtensionSpace {
        alphabet: alphabet.iter().map(|s| s.to_string()).collect(),
        min_extra: 0,
        horizon,
        budget: DEFAULT_EXTENSION_BUDGET,
    };
    oracle_irrevocable_with(f, prefix, k, &space)
}

pub fn oracle_irrevocable_with(
    f: &Formula,
    prefix: &Trace,
    k: usize,
    space: &ExtensionSpace,
) -> Result<Irrevocability, OracleError> {
    if k > prefix.len() {
        return Err(OracleError::PrefixTooLong {
            k,
            len: prefix.len(),
        });
    }
    let subsets = all_subsets(&space.alphabet);
    let width = subsets.len() as u128;
    let needed: u128 = (space.min_extra..=space.horizon)
        .map(|e| width.saturating_pow(e as u32))
        .sum();
    if needed > space.budget {
        return Err(OracleError::BudgetExceeded {
            needed,
            budget: space.budget,
        });
    }
    let mut seen_true = false;
    let mut seen_false = false;
    let mut trace = prefix.prefix(k);
    for extra in space.min_extra..=space.horizon {
        if k + extra == 0 {
            continue;
        }
        let mut digits = vec![0usize; extra];
        loop {
            trace.cells.truncate(k);
            trace.cells.extend(digits.iter().map(|&d| subsets[d].clone()));
            if eval_at(f, &trace, 0) {
                seen_true = true;
            } else {
                seen_false = true;
            }
            if seen_true && seen_false {
                return Ok(Irrevocability::Varies);
            }
            if !advance(&mut digits, subsets.len()) {
                break;
            }
        }
    }
    Ok(match (seen_true, seen_false) {
        (true, false) => Irrevocability::AlwaysTrue,
        (false, true) => Irrevocability::AlwaysFalse,
        _ => Irrevocability::Varies,
    })
}

fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Every subset of `alphabet`, indexed by bitmask.
pub fn all_subsets(alphabet: &[String]) -> Vec<Cell> {
    (0..1usize << alphabet.len())
        .map(|mask| {
            alphabet
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask >> bit & 1 == 1)
                .map(|(_, a)| a.clone())
                .collect()
        })
        .collect()
}

/// Lane masks for up to 256 traces evaluated side by side.
pub type Lanes = [u64; 4];

pub const NO_LANES: Lanes = [0; 4];

#[inline]
pub fn lanes_and(a: Lanes, b: Lanes) -> Lanes {
    [a[0] & b[0], a[1] & b[1], a[2] & b[2], a[3] & b[3]]
}

#[inline]
pub fn lanes_or(a: Lanes, b: Lanes) -> Lanes {
    [a[0] | b[0], a[1] | b[1], a[2] | b[2], a[3] | b[3]]
}

#[inline]
pub fn lanes_not(a: Lanes, live: Lanes) -> Lanes {
    [!a[0] & live[0], !a[1] & live[1], !a[2] & live[2], !a[3] & live[3]]
}

pub fn lane_set(lanes: &Lanes, lane: usize) -> bool {
    lanes[lane / 64] >> (lane % 64) & 1 == 1
}

fn lanes_full(count: usize) -> Lanes {
    let mut out = NO_LANES;
    for lane in 0..count {
        out[lane / 64] |= 1 << (lane % 64);
    }
    out
}

/// A batch of equal-length traces, one per lane.
///
/// Observation masks are stored per symbol and position; evaluation walks a
/// [`SubformulaTable`] bottom-up and yields, for every node and position,
/// the lanes where the subformula holds.
#[derive(Debug, Clone)]
pub struct TraceBatch {
    len: usize,
    count: usize,
    live: Lanes,
    symbols: Vec<String>,
    /// `obs[s][p]`: lanes whose cell `p` contains symbol `s`.
    obs: Vec<Vec<Lanes>>,
}

impl TraceBatch {
    /// All `(2^|alphabet|)^len` traces of length `len`. Lane `j` encodes its
    /// cell at position `p` in digit `p` of `j` written in base `2^|alphabet|`.
    pub fn all_traces(alphabet: &[String], len: usize) -> TraceBatch {
        Self::extensions(&Trace::default(), alphabet, len)
    }

    /// `prefix` followed by every suffix of exactly `extra` cells.
    pub fn extensions(prefix: &Trace, alphabet: &[String], extra: usize) -> TraceBatch {
        let width = 1usize << alphabet.len();
        let count = width.pow(extra as u32);
        assert!(count <= 256, "at most 256 lanes per batch");
        let len = prefix.len() + extra;
        let mut symbols: Vec<String> = alphabet.to_vec();
        for cell in &prefix.cells {
            for o in cell {
                if !symbols.contains(o) {
                    symbols.push(o.clone());
                }
            }
        }
        let live = lanes_full(count);
        let mut obs = vec![vec![NO_LANES; len]; symbols.len()];
        for (s, name) in symbols.iter().enumerate() {
            for (p, cell) in prefix.cells.iter().enumerate() {
                if cell.contains(name) {
                    obs[s][p] = live;
                }
            }
            let Some(bit) = alphabet.iter().position(|a| a == name) else {
                continue;
            };
            for e in 0..extra {
                let p = prefix.len() + e;
                for lane in 0..count {
                    let digit = lane / width.pow(e as u32) % width;
                    if digit >> bit & 1 == 1 {
                        obs[s][p][lane / 64] |= 1 << (lane % 64);
                    }
                }
            }
        }
        TraceBatch {
            len,
            count,
            live,
            symbols,
            obs,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lane_count(&self) -> usize {
        self.count
    }

    pub fn live(&self) -> Lanes {
        self.live
    }

    /// Materializes the trace held in `lane`.
    pub fn trace(&self, lane: usize) -> Trace {
        let cells = (0..self.len)
            .map(|p| {
                self.symbols
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| lane_set(&self.obs[*s][p], lane))
                    .map(|(_, n)| n.clone())
                    .collect()
            })
            .collect();
        Trace { cells }
    }

    fn atom(&self, name: &str, p: usize) -> Lanes {
        match self.symbols.iter().position(|s| s == name) {
            Some(s) => self.obs[s][p],
            None => NO_LANES,
        }
    }

    /// `out[node][p]` = lanes where subformula `node` holds at position `p`.
    pub fn evaluate(&self, table: &SubformulaTable) -> Vec<Vec<Lanes>> {
        let n = self.len;
        let live = self.live;
        let mut out: Vec<Vec<Lanes>> = Vec::with_capacity(table.len());
        for node in table.nodes() {
            let mut row = vec![NO_LANES; n];
            match &node.kind {
                NodeKind::True => row.iter_mut().for_each(|v| *v = live),
                NodeKind::End => {
                    if n > 0 {
                        row[n - 1] = live;
                    }
                }
                NodeKind::Atom(a) => (0..n).for_each(|p| row[p] = self.atom(a, p)),
                NodeKind::NegAtom(a) => (0..n).for_each(|p| row[p] = lanes_not(self.atom(a, p), live)),
                NodeKind::Or(l, r) => (0..n).for_each(|p| row[p] = lanes_or(out[*l][p], out[*r][p])),
                NodeKind::And(l, r) => {
                    (0..n).for_each(|p| row[p] = lanes_and(out[*l][p], out[*r][p]))
                }
                NodeKind::Next(c) => (0..n.saturating_sub(1)).for_each(|p| row[p] = out[*c][p + 1]),
                NodeKind::WeakNext(c) => {
                    (0..n).for_each(|p| row[p] = if p + 1 < n { out[*c][p + 1] } else { live })
                }
                NodeKind::Until(l, r) => {
                    let mut later = NO_LANES;
                    for p in (0..n).rev() {
                        later = lanes_or(out[*r][p], lanes_and(out[*l][p], later));
                        row[p] = later;
                    }
                }
                NodeKind::Eventually(c) => {
                    let mut later = NO_LANES;
                    for p in (0..n).rev() {
                        later = lanes_or(out[*c][p], later);
                        row[p] = later;
                    }
                }
                NodeKind::Always(c) => {
                    let mut later = live;
                    for p in (0..n).rev() {
                        later = lanes_and(out[*c][p], later);
                        row[p] = later;
                    }
                }
            }
            out.push(row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, post_order};

    fn f(text: &str) -> Formula {
        parse_formula(text).unwrap()
    }

    fn ab() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn always_holds_on_full_trace() {
        let u = Trace::from_slices(&[&["a"], &["a"], &["a"]]);
        assert_eq!(oracle_eval(&f("G a"), &u, 0), Ok(true));
    }

    #[test]
    fn strong_and_weak_next_at_last_cell() {
        let u = Trace::from_slices(&[&["a"]]);
        assert_eq!(oracle_eval(&f("X a"), &u, 0), Ok(false));
        assert_eq!(oracle_eval(&f("W a"), &u, 0), Ok(true));
    }

    #[test]
    fn paper_trace_satisfies_disjunction() {
        let u = Trace::from_slices(&[&["c"], &["a"], &["b", "d"], &["b"]]);
        assert_eq!(oracle_eval(&f("a | F b"), &u, 0), Ok(true));
        assert_eq!(oracle_eval(&f("a"), &u, 0), Ok(false));
        assert_eq!(oracle_eval(&f("a"), &u, 1), Ok(true));
    }

    #[test]
    fn end_and_true() {
        let u = Trace::from_slices(&[&[], &[]]);
        assert_eq!(oracle_eval(&f("END"), &u, 0), Ok(false));
        assert_eq!(oracle_eval(&f("END"), &u, 1), Ok(true));
        assert_eq!(oracle_eval(&f("true"), &u, 1), Ok(true));
        assert_eq!(oracle_eval(&f("F END"), &u, 0), Ok(true));
    }

    #[test]
    fn until_semantics() {
        let u = Trace::from_slices(&[&["a"], &["a"], &["b"]]);
        assert_eq!(oracle_eval(&f("a U b"), &u, 0), Ok(true));
        let u = Trace::from_slices(&[&["a"], &[], &["b"]]);
        assert_eq!(oracle_eval(&f("a U b"), &u, 0), Ok(false));
        let u = Trace::from_slices(&[&["a"], &["a"]]);
        assert_eq!(oracle_eval(&f("a U b"), &u, 0), Ok(false));
    }

    #[test]
    fn index_out_of_range() {
        let u = Trace::from_slices(&[&["a"]]);
        assert_eq!(
            oracle_eval(&f("a"), &u, 1),
            Err(OracleError::IndexOutOfRange { index: 1, len: 1 })
        );
    }

    #[test]
    fn irrevocability_examples() {
        let pre = Trace::from_slices(&[&["b"]]);
        assert_eq!(
            oracle_irrevocable(&f("F b"), &pre, 1, &["a", "b"], 2),
            Ok(Irrevocability::AlwaysTrue)
        );
        let pre = Trace::from_slices(&[&["a"]]);
        assert_eq!(
            oracle_irrevocable(&f("G a"), &pre, 1, &["a", "b"], 2),
            Ok(Irrevocability::Varies)
        );
        let pre = Trace::from_slices(&[&["c"], &["a"], &["b", "d"]]);
        assert_eq!(
            oracle_irrevocable(&f("a | F b"), &pre, 3, &["a", "b", "c", "d"], 2),
            Ok(Irrevocability::AlwaysTrue)
        );
        let pre = Trace::from_slices(&[&[]]);
        assert_eq!(
            oracle_irrevocable(&f("a"), &pre, 1, &["a"], 3),
            Ok(Irrevocability::AlwaysFalse)
        );
    }

    #[test]
    fn irrevocability_budget_guard() {
        let pre = Trace::from_slices(&[&[]]);
        let space = ExtensionSpace {
            alphabet: ab(),
            min_extra: 0,
            horizon: 3,
            budget: 10,
        };
        assert_eq!(
            oracle_irrevocable_with(&f("a"), &pre, 1, &space),
            Err(OracleError::BudgetExceeded { needed: 85, budget: 10 })
        );
    }

    #[test]
    fn batch_lanes_decode_to_expected_traces() {
        let batch = TraceBatch::all_traces(&ab(), 2);
        assert_eq!(batch.lane_count(), 16);
        // lane 6 = digits (2, 1): cell 0 = {b}, cell 1 = {a}
        assert_eq!(batch.trace(6), Trace::from_slices(&[&["b"], &["a"]]));
        let pre = Trace::from_slices(&[&["c"]]);
        let ext = TraceBatch::extensions(&pre, &ab(), 1);
        assert_eq!(ext.trace(3), Trace::from_slices(&[&["c"], &["a", "b"]]));
    }

    #[test]
    fn batch_agrees_with_scalar_on_examples() {
        for text in ["a U b", "F(a & X b)", "G(a | W !b)", "X END", "(a U X b) & G true"] {
            let formula = f(text);
            let table = post_order(&formula).unwrap();
            for len in 1..=3 {
                let batch = TraceBatch::all_traces(&ab(), len);
                let vals = batch.evaluate(&table);
                for lane in 0..batch.lane_count() {
                    let u = batch.trace(lane);
                    for (idx, node) in table.nodes().iter().enumerate() {
                        for p in 0..len {
                            assert_eq!(
                                lane_set(&vals[idx][p], lane),
                                oracle_eval(&node.formula, &u, p).unwrap(),
                                "{text} node {} lane {lane} pos {p}",
                                node.formula
                            );
                        }
                    }
                }
            }
        }
    }
}
