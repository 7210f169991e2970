//! Monitor-state atoms and their dense encoding.
//!
//! A state is a set of [`StateAtom`]s. For chaining, every atom a rule system
//! can mention gets a dense id from an [`AtomIndex`] and states are stored as
//! [`AtomSet`] bitsets.

use std::collections::HashMap;
use std::fmt;

use crate::formula::{NodeKind, SubformulaTable};

/// Three-valued truth; `U` is the undecided value and prints as `?`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TruthValue {
    T,
    F,
    U,
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthValue::T => "T",
            TruthValue::F => "F",
            TruthValue::U => "?",
        })
    }
}

/// Subscript refining an activation or an undecided evaluation.
///
/// `B`/`L`/`R`: both, left or right operand still matters. `A`: standard
/// until. `M`: next operator mirroring its operand. `K`: always operator whose
/// operand held so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qualifier {
    None,
    B,
    L,
    R,
    A,
    M,
    K,
}

impl Qualifier {
    pub const ALL: [Qualifier; 7] = [
        Qualifier::None,
        Qualifier::B,
        Qualifier::L,
        Qualifier::R,
        Qualifier::A,
        Qualifier::M,
        Qualifier::K,
    ];

    fn slot(self) -> u32 {
        self as u32
    }
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qualifier::None => "",
            Qualifier::B => "B",
            Qualifier::L => "L",
            Qualifier::R => "R",
            Qualifier::A => "A",
            Qualifier::M => "M",
            Qualifier::K => "K",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateAtom {
    ObsPresent(String),
    ObsAbsent(String),
    EndMarker,
    NotEnd,
    RuleAct(usize, Qualifier),
    Truth(usize, TruthValue, Qualifier),
    Success,
    Failure,
    Repeat,
}

/// How observations are written when rendering atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomStyle {
    /// `obs:a`, `!obs:a`, `!END`: the rule dump format.
    Rules,
    /// Bare observation names, as in the state evolution tables.
    Evolution,
}

impl StateAtom {
    pub fn render(&self, table: &SubformulaTable, style: AtomStyle) -> String {
        match (self, style) {
            (StateAtom::ObsPresent(a), AtomStyle::Rules) => format!("obs:{a}"),
            (StateAtom::ObsPresent(a), AtomStyle::Evolution) => a.clone(),
            (StateAtom::ObsAbsent(a), _) => format!("!obs:{a}"),
            (StateAtom::EndMarker, _) => "END".into(),
            (StateAtom::NotEnd, _) => "!END".into(),
            (StateAtom::RuleAct(n, q), _) => format!("R[{}]{q}", table.formula(*n)),
            (StateAtom::Truth(n, v, q), _) => format!("[{}]{v}{q}", table.formula(*n)),
            (StateAtom::Success, _) => "SUCCESS".into(),
            (StateAtom::Failure, _) => "FAILURE".into(),
            (StateAtom::Repeat, _) => "REPEAT".into(),
        }
    }

    /// Atoms the engine adds to keep chaining monotone; hidden in evolution tables.
    pub fn is_closed_world_fact(&self) -> bool {
        matches!(self, StateAtom::ObsAbsent(_) | StateAtom::NotEnd)
    }

    pub fn is_observation(&self) -> bool {
        matches!(
            self,
            StateAtom::ObsPresent(_) | StateAtom::ObsAbsent(_) | StateAtom::EndMarker | StateAtom::NotEnd
        )
    }
}

pub type AtomId = u32;

const END_MARKER: AtomId = 0;
const NOT_END: AtomId = 1;
const SUCCESS: AtomId = 2;
const FAILURE: AtomId = 3;
const REPEAT: AtomId = 4;
const GLOBALS: AtomId = 5;
/// Per node: 7 activation slots, T, F, then 7 undecided slots.
const NODE_STRIDE: AtomId = 16;

/// Dense numbering of every atom a rule system can mention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomIndex {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    nodes: usize,
    /// Symbol id of each literal node, for closed-world ingestion.
    leaf_symbol: Vec<Option<u32>>,
}

impl AtomIndex {
    pub fn new(table: &SubformulaTable) -> Self {
        let mut symbols: Vec<String> = Vec::new();
        let mut symbol_ids = HashMap::new();
        let mut leaf_symbol = Vec::with_capacity(table.len());
        for node in table.nodes() {
            let sym = match &node.kind {
                NodeKind::Atom(a) | NodeKind::NegAtom(a) => {
                    let next = symbols.len() as u32;
                    let id = *symbol_ids.entry(a.clone()).or_insert_with(|| {
                        symbols.push(a.clone());
                        next
                    });
                    Some(id)
                }
                _ => None,
            };
            leaf_symbol.push(sym);
        }
        AtomIndex {
            symbols,
            symbol_ids,
            nodes: table.len(),
            leaf_symbol,
        }
    }

    pub fn universe(&self) -> usize {
        (self.node_base() + NODE_STRIDE * self.nodes as AtomId) as usize
    }

    fn node_base(&self) -> AtomId {
        GLOBALS + 2 * self.symbols.len() as AtomId
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_id(&self, name: &str) -> Option<u32> {
        self.symbol_ids.get(name).copied()
    }

    pub fn leaf_symbol(&self, node: usize) -> Option<u32> {
        self.leaf_symbol[node]
    }

    pub fn end_marker(&self) -> AtomId {
        END_MARKER
    }
    pub fn not_end(&self) -> AtomId {
        NOT_END
    }
    pub fn success(&self) -> AtomId {
        SUCCESS
    }
    pub fn failure(&self) -> AtomId {
        FAILURE
    }
    pub fn repeat(&self) -> AtomId {
        REPEAT
    }

    pub fn present(&self, symbol: u32) -> AtomId {
        GLOBALS + 2 * symbol
    }

    pub fn absent(&self, symbol: u32) -> AtomId {
        GLOBALS + 2 * symbol + 1
    }

    pub fn act(&self, node: usize, q: Qualifier) -> AtomId {
        self.node_base() + NODE_STRIDE * node as AtomId + q.slot()
    }

    pub fn truth(&self, node: usize, v: TruthValue, q: Qualifier) -> AtomId {
        let base = self.node_base() + NODE_STRIDE * node as AtomId;
        match v {
            TruthValue::T => base + 7,
            TruthValue::F => base + 8,
            TruthValue::U => base + 9 + q.slot(),
        }
    }

    /// Id range holding all activations of `node`.
    pub fn act_range(&self, node: usize) -> std::ops::Range<AtomId> {
        let base = self.node_base() + NODE_STRIDE * node as AtomId;
        base..base + 7
    }

    /// Id range holding all truth evaluations of `node`.
    pub fn truth_range(&self, node: usize) -> std::ops::Range<AtomId> {
        let base = self.node_base() + NODE_STRIDE * node as AtomId;
        base + 7..base + NODE_STRIDE
    }

    /// Encodes an atom; `None` for observations of symbols no rule mentions.
    pub fn encode(&self, atom: &StateAtom) -> Option<AtomId> {
        Some(match atom {
            StateAtom::ObsPresent(a) => self.present(self.symbol_id(a)?),
            StateAtom::ObsAbsent(a) => self.absent(self.symbol_id(a)?),
            StateAtom::EndMarker => END_MARKER,
            StateAtom::NotEnd => NOT_END,
            StateAtom::Success => SUCCESS,
            StateAtom::Failure => FAILURE,
            StateAtom::Repeat => REPEAT,
            StateAtom::RuleAct(n, q) if *n < self.nodes => self.act(*n, *q),
            StateAtom::Truth(n, v, q) if *n < self.nodes => {
                let q = if *v == TruthValue::U { *q } else { Qualifier::None };
                self.truth(*n, *v, q)
            }
            _ => return None,
        })
    }

    pub fn decode(&self, id: AtomId) -> StateAtom {
        match id {
            END_MARKER => StateAtom::EndMarker,
            NOT_END => StateAtom::NotEnd,
            SUCCESS => StateAtom::Success,
            FAILURE => StateAtom::Failure,
            REPEAT => StateAtom::Repeat,
            id if id < self.node_base() => {
                let sym = self.symbols[((id - GLOBALS) / 2) as usize].clone();
                if (id - GLOBALS).is_multiple_of(2) {
                    StateAtom::ObsPresent(sym)
                } else {
                    StateAtom::ObsAbsent(sym)
                }
            }
            id => {
                let rel = id - self.node_base();
                let node = (rel / NODE_STRIDE) as usize;
                match rel % NODE_STRIDE {
                    s @ 0..=6 => StateAtom::RuleAct(node, Qualifier::ALL[s as usize]),
                    7 => StateAtom::Truth(node, TruthValue::T, Qualifier::None),
                    8 => StateAtom::Truth(node, TruthValue::F, Qualifier::None),
                    s => StateAtom::Truth(node, TruthValue::U, Qualifier::ALL[(s - 9) as usize]),
                }
            }
        }
    }
}

/// Bitset over the ids of an [`AtomIndex`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AtomSet {
    words: Vec<u64>,
}

impl AtomSet {
    pub fn with_universe(size: usize) -> Self {
        AtomSet {
            words: vec![0; size.div_ceil(64)],
        }
    }

    #[inline]
    pub fn contains(&self, id: AtomId) -> bool {
        self.words[(id / 64) as usize] >> (id % 64) & 1 == 1
    }

    /// Returns true when the atom was not present before.
    #[inline]
    pub fn insert(&mut self, id: AtomId) -> bool {
        let w = &mut self.words[(id / 64) as usize];
        let bit = 1u64 << (id % 64);
        let fresh = *w & bit == 0;
        *w |= bit;
        fresh
    }

    pub fn remove(&mut self, id: AtomId) {
        self.words[(id / 64) as usize] &= !(1u64 << (id % 64));
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn union_with(&mut self, other: &AtomSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn is_subset(&self, other: &AtomSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn any_in(&self, range: std::ops::Range<AtomId>) -> bool {
        range.into_iter().any(|id| self.contains(id))
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| (wi * 64 + b) as AtomId)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, post_order};

    #[test]
    fn encode_decode_round_trip() {
        let table = post_order(&parse_formula("(a U !b) | X F c").unwrap()).unwrap();
        let index = AtomIndex::new(&table);
        let mut seen = std::collections::HashSet::new();
        for id in 0..index.universe() as AtomId {
            let atom = index.decode(id);
            assert_eq!(index.encode(&atom), Some(id), "{atom:?}");
            assert!(seen.insert(atom));
        }
        assert_eq!(index.encode(&StateAtom::ObsPresent("zz".into())), None);
    }

    #[test]
    fn rendering() {
        let table = post_order(&parse_formula("a | F b").unwrap()).unwrap();
        let act = StateAtom::RuleAct(3, Qualifier::B);
        assert_eq!(act.render(&table, AtomStyle::Rules), "R[(a | F b)]B");
        let t = StateAtom::Truth(2, TruthValue::U, Qualifier::None);
        assert_eq!(t.render(&table, AtomStyle::Rules), "[F b]?");
        let t = StateAtom::Truth(3, TruthValue::U, Qualifier::R);
        assert_eq!(t.render(&table, AtomStyle::Rules), "[(a | F b)]?R");
        let o = StateAtom::ObsPresent("c".into());
        assert_eq!(o.render(&table, AtomStyle::Rules), "obs:c");
        assert_eq!(o.render(&table, AtomStyle::Evolution), "c");
    }

    #[test]
    fn bitset_basics() {
        let mut s = AtomSet::with_universe(130);
        assert!(s.insert(129));
        assert!(!s.insert(129));
        s.insert(3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![3, 129]);
        let mut t = AtomSet::with_universe(130);
        t.insert(3);
        assert!(t.is_subset(&s));
        assert!(!s.is_subset(&t));
        t.union_with(&s);
        assert_eq!(t.len(), 2);
    }
}
