//! FLTL formulae: syntax tree, parser, printer, negation normal form and
//! post-order indexing.
//!
//! Concrete syntax, from tightest to loosest binding:
//!
//! ```text
//! primary  := ident | true | END | ( formula )
//! unary    := (! | X | W | F | G) unary | primary
//! and      := unary (& unary)*          left associative
//! until    := and (U until)?            right associative
//! formula  := until (| until)*          left associative
//! ```
//!
//! Atoms are identifiers matching `[a-z][a-zA-Z0-9_]*`, so `aUb` is a single
//! atom while `a U b` is an until. The unicode glyphs `¬ ∨ ∧ ◇ □` are accepted
//! as aliases of `! | & F G`.

use std::fmt;

use thiserror::Error;

/// Errors raised while parsing or normalizing a formula.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unbalanced parenthesis at position {pos}")]
    UnbalancedParen { pos: usize },
    #[error("no NNF form in grammar: cannot negate {0}")]
    NoNnfForm(String),
    #[error("formula is not in negation normal form: {0}")]
    NotNnf(String),
}

/// An FLTL formula. `Not` only exists between parsing and [`normalize_nnf`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    End,
    Atom(String),
    NegAtom(String),
    Not(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    WeakNext(Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    pub fn neg_atom(name: &str) -> Self {
        Formula::NegAtom(name.to_string())
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn weak_next(f: Formula) -> Self {
        Formula::WeakNext(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    pub fn negate(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::End | Formula::Atom(_) | Formula::NegAtom(_) => vec![],
            Formula::Not(c)
            | Formula::Next(c)
            | Formula::WeakNext(c)
            | Formula::Eventually(c)
            | Formula::Always(c) => vec![c],
            Formula::Or(l, r) | Formula::And(l, r) | Formula::Until(l, r) => vec![l, r],
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn height(&self) -> usize {
        1 + self.children().iter().map(|c| c.height()).max().unwrap_or(0)
    }

    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::Not(_) => false,
            _ => self.children().iter().all(|c| c.is_nnf()),
        }
    }

    /// True when no `F` or `G` occurs in the formula.
    pub fn is_eventually_always_free(&self) -> bool {
        match self {
            Formula::Eventually(_) | Formula::Always(_) => false,
            _ => self.children().iter().all(|c| c.is_eventually_always_free()),
        }
    }

    /// Observation names referenced by literals, sorted and deduplicated.
    pub fn atom_names(&self) -> Vec<String> {
        fn walk(f: &Formula, out: &mut Vec<String>) {
            match f {
                Formula::Atom(n) | Formula::NegAtom(n) => out.push(n.clone()),
                _ => f.children().into_iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

fn fmt_unary(f: &mut fmt::Formatter<'_>, op: &str, child: &Formula) -> fmt::Result {
    match child {
        Formula::Atom(_) | Formula::NegAtom(_) | Formula::True | Formula::End => {
            write!(f, "{op} {child}")
        }
        Formula::Or(..) | Formula::And(..) | Formula::Until(..) => write!(f, "{op}{child}"),
        _ => write!(f, "{op} {child}"),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::End => write!(f, "END"),
            Formula::Atom(n) => write!(f, "{n}"),
            Formula::NegAtom(n) => write!(f, "!{n}"),
            Formula::Not(c) => write!(f, "!({c})"),
            Formula::Or(l, r) => write!(f, "({l} | {r})"),
            Formula::And(l, r) => write!(f, "({l} & {r})"),
            Formula::Until(l, r) => write!(f, "({l} U {r})"),
            Formula::Next(c) => fmt_unary(f, "X", c),
            Formula::WeakNext(c) => fmt_unary(f, "W", c),
            Formula::Eventually(c) => fmt_unary(f, "F", c),
            Formula::Always(c) => fmt_unary(f, "G", c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    True,
    End,
    Not,
    Or,
    And,
    Until,
    Next,
    WeakNext,
    Eventually,
    Always,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, FormulaError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    while i < chars.len() {
        let (pos, c) = chars[i];
        let single = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '!' | '¬' | '~' => Some(Token::Not),
            '|' | '∨' => Some(Token::Or),
            '&' | '∧' => Some(Token::And),
            '◇' => Some(Token::Eventually),
            '□' => Some(Token::Always),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((pos, tok));
            i += 1;
            continue;
        }
        if c.is_ascii_lowercase() {
            let start = i;
            while i < chars.len() && is_word(chars[i].1) {
                i += 1;
            }
            let word: String = chars[start..i].iter().map(|(_, c)| c).collect();
            let tok = if word == "true" { Token::True } else { Token::Ident(word) };
            out.push((pos, tok));
            continue;
        }
        if c.is_ascii_uppercase() {
            let rest: String = chars[i..].iter().take(4).map(|(_, c)| c).collect();
            if rest.starts_with("END") && !rest.chars().nth(3).is_some_and(is_word) {
                out.push((pos, Token::End));
                i += 3;
                continue;
            }
            let tok = match c {
                'X' => Token::Next,
                'W' => Token::WeakNext,
                'F' => Token::Eventually,
                'G' => Token::Always,
                'U' => Token::Until,
                _ => {
                    return Err(FormulaError::Syntax {
                        pos,
                        msg: format!("unknown operator '{c}'"),
                    })
                }
            };
            out.push((pos, tok));
            i += 1;
            continue;
        }
        return Err(FormulaError::Syntax {
            pos,
            msg: format!("unexpected character '{c}'"),
        });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).map(|(_, t)| t.clone());
        self.at += 1;
        t
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Token::Or) {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.conjunction()?;
        if self.peek() == Some(&Token::Until) {
            self.bump();
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        let wrap: fn(Formula) -> Formula = match self.peek() {
            Some(Token::Not) => Formula::negate,
            Some(Token::Next) => Formula::next,
            Some(Token::WeakNext) => Formula::weak_next,
            Some(Token::Eventually) => Formula::eventually,
            Some(Token::Always) => Formula::always,
            _ => return self.primary(),
        };
        self.bump();
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Some(Token::Ident(name)) => Ok(Formula::Atom(name)),
            Some(Token::True) => Ok(Formula::True),
            Some(Token::End) => Ok(Formula::End),
            Some(Token::LParen) => {
                let inner = self.disjunction()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(FormulaError::UnbalancedParen { pos }),
                }
            }
            Some(Token::RParen) => Err(FormulaError::UnbalancedParen { pos }),
            Some(tok) => Err(FormulaError::Syntax {
                pos,
                msg: format!("unexpected {tok:?}"),
            }),
            None => Err(FormulaError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses formula text, keeping general negations as `Formula::Not`.
pub fn parse_raw(text: &str) -> Result<Formula, FormulaError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(FormulaError::Syntax {
            pos: 0,
            msg: "empty formula".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        at: 0,
        len: text.len(),
    };
    let f = parser.disjunction()?;
    if parser.at < parser.tokens.len() {
        let pos = parser.pos();
        return Err(match parser.peek() {
            Some(Token::RParen) => FormulaError::UnbalancedParen { pos },
            _ => FormulaError::Syntax {
                pos,
                msg: "trailing input".into(),
            },
        });
    }
    Ok(f)
}

/// Parses formula text and brings it into negation normal form.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    normalize_nnf(&parse_raw(text)?)
}

/// Pushes negations down to literals using the FLTL dualities.
pub fn normalize_nnf(f: &Formula) -> Result<Formula, FormulaError> {
    use Formula::*;
    Ok(match f {
        True | End | Atom(_) | NegAtom(_) => f.clone(),
        Not(inner) => negate_nnf(inner)?,
        Or(l, r) => Formula::or(normalize_nnf(l)?, normalize_nnf(r)?),
        And(l, r) => Formula::and(normalize_nnf(l)?, normalize_nnf(r)?),
        Until(l, r) => Formula::until(normalize_nnf(l)?, normalize_nnf(r)?),
        Next(c) => Formula::next(normalize_nnf(c)?),
        WeakNext(c) => Formula::weak_next(normalize_nnf(c)?),
        Eventually(c) => Formula::eventually(normalize_nnf(c)?),
        Always(c) => Formula::always(normalize_nnf(c)?),
    })
}

fn negate_nnf(f: &Formula) -> Result<Formula, FormulaError> {
    use Formula::*;
    Ok(match f {
        Atom(n) => NegAtom(n.clone()),
        NegAtom(n) => Atom(n.clone()),
        Not(inner) => normalize_nnf(inner)?,
        Or(l, r) => Formula::and(negate_nnf(l)?, negate_nnf(r)?),
        And(l, r) => Formula::or(negate_nnf(l)?, negate_nnf(r)?),
        Next(c) => Formula::weak_next(negate_nnf(c)?),
        WeakNext(c) => Formula::next(negate_nnf(c)?),
        Eventually(c) => Formula::always(negate_nnf(c)?),
        Always(c) => Formula::eventually(negate_nnf(c)?),
        Until(..) | True | End => return Err(FormulaError::NoNnfForm(f.to_string())),
    })
}

/// Node of a [`SubformulaTable`]; children are referenced by post-order index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    True,
    End,
    Atom(String),
    NegAtom(String),
    Or(usize, usize),
    And(usize, usize),
    Until(usize, usize),
    Next(usize),
    WeakNext(usize),
    Eventually(usize),
    Always(usize),
}

impl NodeKind {
    pub fn children(&self) -> Vec<usize> {
        match *self {
            NodeKind::True | NodeKind::End | NodeKind::Atom(_) | NodeKind::NegAtom(_) => vec![],
            NodeKind::Or(l, r) | NodeKind::And(l, r) | NodeKind::Until(l, r) => vec![l, r],
            NodeKind::Next(c)
            | NodeKind::WeakNext(c)
            | NodeKind::Eventually(c)
            | NodeKind::Always(c) => vec![c],
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub index: usize,
    pub kind: NodeKind,
    pub formula: Formula,
    pub parent: Option<usize>,
}

/// Post-order listing of every node of an NNF formula. The root is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubformulaTable {
    nodes: Vec<Node>,
}

impl SubformulaTable {
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn formula(&self, index: usize) -> &Formula {
        &self.nodes[index].formula
    }

    pub fn root_formula(&self) -> &Formula {
        self.formula(self.root())
    }
}

/// Indexes the nodes of `f` in post-order (children before parents).
pub fn post_order(f: &Formula) -> Result<SubformulaTable, FormulaError> {
    fn visit(f: &Formula, nodes: &mut Vec<Node>) -> Result<usize, FormulaError> {
        let kind = match f {
            Formula::True => NodeKind::True,
            Formula::End => NodeKind::End,
            Formula::Atom(n) => NodeKind::Atom(n.clone()),
            Formula::NegAtom(n) => NodeKind::NegAtom(n.clone()),
            Formula::Not(_) => return Err(FormulaError::NotNnf(f.to_string())),
            Formula::Or(l, r) => NodeKind::Or(visit(l, nodes)?, visit(r, nodes)?),
            Formula::And(l, r) => NodeKind::And(visit(l, nodes)?, visit(r, nodes)?),
            Formula::Until(l, r) => NodeKind::Until(visit(l, nodes)?, visit(r, nodes)?),
            Formula::Next(c) => NodeKind::Next(visit(c, nodes)?),
            Formula::WeakNext(c) => NodeKind::WeakNext(visit(c, nodes)?),
            Formula::Eventually(c) => NodeKind::Eventually(visit(c, nodes)?),
            Formula::Always(c) => NodeKind::Always(visit(c, nodes)?),
        };
        let index = nodes.len();
        for c in kind.children() {
            nodes[c].parent = Some(index);
        }
        nodes.push(Node {
            index,
            kind,
            formula: f.clone(),
            parent: None,
        });
        Ok(index)
    }
    let mut nodes = Vec::with_capacity(f.size());
    visit(f, &mut nodes)?;
    Ok(SubformulaTable { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Formula {
        Formula::atom("a")
    }
    fn b() -> Formula {
        Formula::atom("b")
    }

    #[test]
    fn parses_disjunction_with_eventually() {
        assert_eq!(
            parse_formula("a | F b").unwrap(),
            Formula::or(a(), Formula::eventually(b()))
        );
        assert_eq!(parse_formula("a").unwrap(), a());
    }

    #[test]
    fn parses_benchmark_formulae() {
        let g = parse_formula("G((a|b)|(c|d))").unwrap();
        let want = Formula::always(Formula::or(
            Formula::or(a(), b()),
            Formula::or(Formula::atom("c"), Formula::atom("d")),
        ));
        assert_eq!(g, want);
        let f3 = parse_formula("F((a & X b) | (c & W d))").unwrap();
        assert_eq!(f3.size(), 10);
    }

    #[test]
    fn precedence_ladder() {
        // & binds tighter than U, which binds tighter than |
        let f = parse_formula("a & b U c | d").unwrap();
        let want = Formula::or(
            Formula::until(Formula::and(a(), b()), Formula::atom("c")),
            Formula::atom("d"),
        );
        assert_eq!(f, want);
        // U is right associative
        let f = parse_formula("a U b U c").unwrap();
        assert_eq!(f, Formula::until(a(), Formula::until(b(), Formula::atom("c"))));
        // prefix operators bind tightest
        let f = parse_formula("X a & b").unwrap();
        assert_eq!(f, Formula::and(Formula::next(a()), b()));
        let f = parse_formula("XFa").unwrap();
        assert_eq!(f, Formula::next(Formula::eventually(a())));
    }

    #[test]
    fn identifiers_swallow_uppercase_tail() {
        assert_eq!(parse_formula("aUb").unwrap(), Formula::atom("aUb"));
        assert_eq!(parse_formula("true & END").unwrap(), Formula::and(Formula::True, Formula::End));
        assert_eq!(parse_formula("ENDa"), Err(FormulaError::Syntax { pos: 0, msg: "unknown operator 'E'".into() }));
    }

    #[test]
    fn unicode_aliases() {
        assert_eq!(
            parse_formula("a ∨ ◇b").unwrap(),
            Formula::or(a(), Formula::eventually(b()))
        );
        assert_eq!(parse_formula("¬□a").unwrap(), Formula::eventually(Formula::neg_atom("a")));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        assert!(matches!(parse_formula("(a | b"), Err(FormulaError::UnbalancedParen { .. })));
        assert!(matches!(parse_formula("a | b)"), Err(FormulaError::UnbalancedParen { pos: 5 })));
        assert!(matches!(parse_formula("a |"), Err(FormulaError::Syntax { pos: 3, .. })));
        assert!(matches!(parse_formula(""), Err(FormulaError::Syntax { pos: 0, .. })));
        assert!(matches!(parse_formula("a $ b"), Err(FormulaError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_formula("Q a"), Err(FormulaError::Syntax { pos: 0, .. })));
    }

    #[test]
    fn nnf_dualities() {
        assert_eq!(parse_formula("!F a").unwrap(), Formula::always(Formula::neg_atom("a")));
        assert_eq!(parse_formula("!!a").unwrap(), a());
        assert_eq!(parse_formula("!G a").unwrap(), Formula::eventually(Formula::neg_atom("a")));
        assert_eq!(parse_formula("!X a").unwrap(), Formula::weak_next(Formula::neg_atom("a")));
        assert_eq!(parse_formula("!W a").unwrap(), Formula::next(Formula::neg_atom("a")));
        assert_eq!(
            parse_formula("!(a | !b)").unwrap(),
            Formula::and(Formula::neg_atom("a"), b())
        );
        assert_eq!(
            parse_formula("!(a & b)").unwrap(),
            Formula::or(Formula::neg_atom("a"), Formula::neg_atom("b"))
        );
    }

    #[test]
    fn nnf_rejects_constructs_without_dual() {
        for text in ["!(a U b)", "!true", "!END", "X !(a U b)"] {
            let err = parse_formula(text).unwrap_err();
            assert!(matches!(err, FormulaError::NoNnfForm(_)), "{text}: {err}");
            assert!(err.to_string().contains("no NNF form in grammar"));
        }
    }

    #[test]
    fn post_order_of_paper_example() {
        let t = post_order(&parse_formula("a | F b").unwrap()).unwrap();
        let order: Vec<String> = t.nodes().iter().map(|n| n.formula.to_string()).collect();
        assert_eq!(order, ["a", "b", "F b", "(a | F b)"]);
        assert_eq!(t.node(3).kind, NodeKind::Or(0, 2));
        assert_eq!(t.node(0).parent, Some(3));
        assert_eq!(t.root(), 3);
    }

    #[test]
    fn post_order_single_atom_and_phi3() {
        let t = post_order(&a()).unwrap();
        assert_eq!(t.len(), 1);
        let t = post_order(&parse_formula("F((a & X b) | (c & W d))").unwrap()).unwrap();
        assert_eq!(t.len(), 10);
        assert!(matches!(t.node(t.root()).kind, NodeKind::Eventually(8)));
    }

    #[test]
    fn post_order_rejects_general_negation() {
        let raw = parse_raw("!(a | b)").unwrap();
        assert!(matches!(post_order(&raw), Err(FormulaError::NotNnf(_))));
    }

    #[test]
    fn printer_is_fully_parenthesized() {
        let f = parse_formula("a & b U c | X(d | !e)").unwrap();
        assert_eq!(f.to_string(), "(((a & b) U c) | X(d | !e))");
        assert_eq!(parse_formula("G F a").unwrap().to_string(), "G F a");
    }
}
