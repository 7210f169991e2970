use std::collections::BTreeMap;
use std::io::Cursor;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rulerunner::atoms::{AtomId, StateAtom};
use rulerunner::check::{random_formula, single_instance};
use rulerunner::engine::{evaluate, evaluate_fixpoint, evaluate_single_pass, ingest_cell, monitor_trace, react, EvalMode, MonitorState, Outcome};
use rulerunner::formula::{normalize_nnf, parse_formula, parse_raw, post_order, Formula};
use rulerunner::mapsem::{check_rewriting_chain, map_state, UntilBMap};
use rulerunner::oracle::{oracle_eval, Cell, Trace};
use rulerunner::rulegen::{initialise, rule_count};
use rulerunner::traceio::{parse_trace, serialize, stream_cells};

fn ab() -> Vec<String> {
    vec!["a".into(), "b".into()]
}

fn formula(max_nodes: usize) -> impl Strategy<Value = Formula> {
    (1..=max_nodes, any::<u64>()).prop_map(|(n, seed)| random_formula(n, &ab(), &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn cell(names: &'static [&'static str]) -> impl Strategy<Value = Cell> {
    proptest::sample::subsequence(names, 0..=names.len()).prop_map(|v| v.into_iter().map(String::from).collect())
}

fn trace(names: &'static [&'static str], max_len: usize) -> impl Strategy<Value = Trace> {
    prop::collection::vec(cell(names), 1..=max_len).prop_map(Trace::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse(f in formula(25)) {
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn nnf_is_idempotent(f in formula(15)) {
        prop_assert_eq!(normalize_nnf(&f).unwrap(), f.clone());
        if let Ok(g) = normalize_nnf(&parse_raw(&format!("!({f})")).unwrap()) {
            prop_assert!(g.is_nnf());
            prop_assert_eq!(normalize_nnf(&g).unwrap(), g);
        }
    }

    #[test]
    fn post_order_is_topological(f in formula(25)) {
        let table = post_order(&f).unwrap();
        prop_assert_eq!(table.len(), f.size());
        for i in 0..table.len() {
            for c in table.node(i).kind.children() {
                prop_assert!(c < i);
            }
        }
        prop_assert_eq!(table.root(), table.len() - 1);
    }

    #[test]
    fn eventually_is_true_until(f in formula(5), u in trace(&["a", "b"], 5)) {
        let ev = Formula::eventually(f.clone());
        let until = Formula::until(Formula::True, f);
        for i in 0..u.len() {
            prop_assert_eq!(oracle_eval(&ev, &u, i).unwrap(), oracle_eval(&until, &u, i).unwrap());
        }
    }

    #[test]
    fn always_is_dual_of_eventually(u in trace(&["a", "b"], 5), neg in any::<bool>()) {
        let (lit, dual) = if neg {
            (Formula::neg_atom("a"), Formula::atom("a"))
        } else {
            (Formula::atom("a"), Formula::neg_atom("a"))
        };
        for i in 0..u.len() {
            prop_assert_eq!(
                oracle_eval(&Formula::always(lit.clone()), &u, i).unwrap(),
                !oracle_eval(&Formula::eventually(dual.clone()), &u, i).unwrap()
            );
        }
    }

    #[test]
    fn next_at_the_last_cell(f in formula(6), u in trace(&["a", "b"], 4)) {
        let last = u.len() - 1;
        prop_assert!(!oracle_eval(&Formula::next(f.clone()), &u, last).unwrap());
        prop_assert!(oracle_eval(&Formula::weak_next(f), &u, last).unwrap());
    }

    #[test]
    fn disjunction_overhead_is_fixed(p in formula(40), q in formula(40)) {
        let joined = rule_count(&Formula::or(p.clone(), q.clone())).unwrap() as i64;
        let parts = (rule_count(&p).unwrap() + rule_count(&q).unwrap()) as i64;
        let base = rule_count(&Formula::or(Formula::atom("a"), Formula::atom("b"))).unwrap() as i64 - 2 * rule_count(&Formula::atom("a")).unwrap() as i64;
        prop_assert_eq!(joined - parts, base);
    }

    #[test]
    fn evaluation_is_deterministic(f in formula(12)) {
        let sys = initialise(&f).unwrap();
        let mut heads: BTreeMap<Vec<AtomId>, AtomId> = BTreeMap::new();
        for r in sys.compiled_eval() {
            let mut body = r.body().to_vec();
            body.sort_unstable();
            if let Some(prev) = heads.insert(body, r.head) {
                prop_assert_eq!(prev, r.head);
            }
        }
    }

    #[test]
    fn modes_agree(f in formula(20), u in trace(&["a", "b"], 12)) {
        let sys = initialise(&f).unwrap();
        let mut st = MonitorState::initial(&sys);
        for (i, c) in u.cells.iter().enumerate() {
            ingest_cell(&sys, &mut st, c, i + 1 == u.len()).unwrap();
            let mut single = st.clone();
            let a = evaluate_fixpoint(&sys, &mut st).map(|r| r.verdict);
            let b = evaluate_single_pass(&sys, &mut single).map(|r| r.verdict);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(st.atoms(), single.atoms());
            if a.is_err() || st.verdict().is_some() {
                break;
            }
            react(&sys, &mut st).unwrap();
        }
    }

    #[test]
    fn react_flushes(f in formula(20), u in trace(&["a", "b"], 8)) {
        let sys = initialise(&f).unwrap();
        let mut st = MonitorState::initial(&sys);
        for (i, c) in u.cells.iter().enumerate() {
            ingest_cell(&sys, &mut st, c, i + 1 == u.len()).unwrap();
            match evaluate(&sys, &mut st, EvalMode::SinglePass) {
                Ok(_) if st.verdict().is_none() => {}
                _ => break,
            }
            react(&sys, &mut st).unwrap();
            for atom in st.to_atoms(&sys) {
                prop_assert!(matches!(atom, StateAtom::RuleAct(..)), "{:?} survived react", atom);
            }
        }
    }
}

fn single_instance_formula(max_nodes: usize) -> impl Strategy<Value = Formula> {
    formula(max_nodes).prop_filter("one instance per node", single_instance)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn verdict_matches_oracle(f in single_instance_formula(14), u in trace(&["a", "b"], 6)) {
        let sys = initialise(&f).unwrap();
        let v = monitor_trace(&sys, &u, EvalMode::Fixpoint).unwrap();
        prop_assert!(v.at_cell <= u.len());
        prop_assert_eq!(v.outcome == Outcome::Success, oracle_eval(&f, &u, 0).unwrap());
    }

    #[test]
    fn one_truth_per_node_and_bounded_state(f in single_instance_formula(14), u in trace(&["a", "b"], 6)) {
        let sys = initialise(&f).unwrap();
        let mut st = MonitorState::initial(&sys);
        for (i, c) in u.cells.iter().enumerate() {
            ingest_cell(&sys, &mut st, c, i + 1 == u.len()).unwrap();
            let active: Vec<usize> = st.to_atoms(&sys).iter().filter_map(|a| match a {
                StateAtom::RuleAct(n, _) => Some(*n),
                _ => None,
            }).collect();
            evaluate(&sys, &mut st, EvalMode::Fixpoint).unwrap();
            let mut truths: BTreeMap<usize, usize> = BTreeMap::new();
            for a in st.to_atoms(&sys) {
                if let StateAtom::Truth(n, ..) = a {
                    *truths.entry(n).or_default() += 1;
                }
            }
            for n in &active {
                prop_assert_eq!(truths.get(n).copied().unwrap_or(0), 1, "node {}", n);
            }
            if st.verdict().is_some() {
                break;
            }
            react(&sys, &mut st).unwrap();
            prop_assert!(st.len() <= f.size());
        }
    }

    #[test]
    fn map_ends_at_the_verdict(f in single_instance_formula(12).prop_filter("no F or G", Formula::is_eventually_always_free), u in trace(&["a", "b"], 5)) {
        let chain = check_rewriting_chain(&f, &u, UntilBMap::AsPrinted).unwrap();
        prop_assert!(chain.all_valid());
        prop_assert!(chain.final_matches_verdict());
    }

    #[test]
    fn observations_leave_the_map_alone(f in formula(12).prop_filter("no F or G", Formula::is_eventually_always_free), obs in cell(&["a", "b", "c"])) {
        let sys = initialise(&f).unwrap();
        let st = MonitorState::initial(&sys);
        let base = map_state(&sys, st.atoms(), 0, UntilBMap::AsPrinted).unwrap();
        let mut more = st.clone();
        ingest_cell(&sys, &mut more, &obs, false).unwrap();
        prop_assert_eq!(map_state(&sys, more.atoms(), 0, UntilBMap::AsPrinted).unwrap(), base);
    }

    #[test]
    fn trace_text_round_trip(u in trace(&["a", "b", "c", "req", "ack_1"], 10)) {
        prop_assert_eq!(parse_trace(&serialize(&u)).unwrap(), u);
    }

    #[test]
    fn stream_equals_parse(u in trace(&["a", "b", "c", "req"], 10)) {
        let text = serialize(&u);
        let lines: String = text.split(" - ").map(|c| format!("{c}\n")).collect();
        let streamed: Vec<(Cell, bool)> = stream_cells(Cursor::new(lines)).map(Result::unwrap).collect();
        let n = streamed.len();
        prop_assert_eq!(n, u.len());
        for (i, (c, last)) in streamed.into_iter().enumerate() {
            prop_assert_eq!(&c, &u.cells[i]);
            prop_assert_eq!(last, i + 1 == n);
        }
    }
}
