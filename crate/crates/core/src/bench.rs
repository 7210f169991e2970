//! Throughput measurements: compile a formula, then monitor random cells.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{EngineError, EvalMode, Monitor, Status};
use crate::formula::{parse_formula, Formula, FormulaError};
use crate::oracle::Cell;
use crate::rulegen::initialise;
use crate::traceio::{RandomCells, TraceError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{id}: verdict {verdict} after {at} of {n} cells")]
    EarlyVerdict { id: String, verdict: String, at: usize, n: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A benchmarked formula with the observations its cells are drawn from.
#[derive(Debug, Clone)]
pub struct BenchFormula {
    pub id: String,
    pub formula: Formula,
    pub alphabet: Vec<String>,
    /// Symbols added to every cell.
    pub always: Vec<String>,
}

fn latin_except(excluded: &[&str]) -> Vec<String> {
    ('a'..='z')
        .map(|c| c.to_string())
        .filter(|c| !excluded.contains(&c.as_str()))
        .collect()
}

/// `F a`, `G((a | b) | (c | d))` and `F((a & X b) | (c & W d))`, with cells
/// that never settle them before the last one.
pub fn default_formulas() -> Vec<BenchFormula> {
    let f = |s: &str| parse_formula(s).expect("built-in formula");
    vec![
        BenchFormula {
            id: "phi1".into(),
            formula: f("F a"),
            alphabet: latin_except(&["a"]),
            always: vec![],
        },
        BenchFormula {
            id: "phi2".into(),
            formula: f("G((a | b) | (c | d))"),
            alphabet: latin_except(&[]),
            always: vec!["a".into()],
        },
        BenchFormula {
            id: "phi3".into(),
            formula: f("F((a & X b) | (c & W d))"),
            alphabet: latin_except(&["a", "c"]),
            always: vec![],
        },
    ]
}

/// Parses a formula list: one `id; formula[; exclude=a,b][; always=c]` per
/// line. Blank lines and lines starting with `#` are skipped.
pub fn parse_formula_list(text: &str) -> Result<Vec<BenchFormula>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| BenchError::Spec { line: i + 1, message };
        let fields: Vec<&str> = line.split(';').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(err("expected 'id; formula'".into()));
        }
        let formula = parse_formula(fields[1]).map_err(|e| err(e.to_string()))?;
        let mut excluded: Vec<String> = Vec::new();
        let mut always: Vec<String> = Vec::new();
        for opt in &fields[2..] {
            let (key, value) = opt.split_once('=').ok_or_else(|| err(format!("bad option '{opt}'")))?;
            let list = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            match key.trim() {
                "exclude" => excluded.extend(list),
                "always" => always.extend(list),
                other => return Err(err(format!("unknown option '{other}'"))),
            }
        }
        let excluded: Vec<&str> = excluded.iter().map(String::as_str).collect();
        out.push(BenchFormula {
            id: fields[0].to_string(),
            formula,
            alphabet: latin_except(&excluded),
            always,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub formula: String,
    pub n_cells: usize,
    pub rep: usize,
    pub compile_ms: f64,
    pub total_ms: f64,
    pub avg_ms_per_cell: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub cells: Vec<usize>,
    pub seed: u64,
    pub reps: usize,
    pub density: f64,
    pub mode: EvalMode,
}

/// Distinct random cells drawn per run; the run picks among them.
const POOL: usize = 1024;

fn cell_source(bf: &BenchFormula, n: usize, density: f64, seed: u64) -> Result<(Vec<Cell>, Vec<u16>), BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Cell> = RandomCells::new(&bf.alphabet, density, &mut rng)?
        .take(POOL)
        .map(|mut c| {
            c.extend(bf.always.iter().cloned());
            c
        })
        .collect();
    let picks = (0..n).map(|_| rng.gen_range(0..POOL as u16)).collect();
    Ok((pool, picks))
}

/// Compiles and monitors `n` cells once. `compile_ms` and `total_ms` time
/// compilation and monitoring separately; cell generation is not timed.
pub fn bench_one(bf: &BenchFormula, n: usize, rep: usize, cfg: &BenchConfig) -> Result<BenchRecord, BenchError> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let (pool, picks) = cell_source(bf, n, cfg.density, seed)?;
    let start = Instant::now();
    let sys = initialise(&bf.formula).map_err(|e| match e {
        crate::rulegen::RuleGenError::Formula(f) => BenchError::Formula(f),
        other => BenchError::Spec {
            line: 0,
            message: other.to_string(),
        },
    })?;
    let compiled = start.elapsed();
    let start = Instant::now();
    let mut m = Monitor::new(&sys, cfg.mode);
    for (i, &p) in picks.iter().enumerate() {
        if let Status::Done(v) = m.push(&pool[p as usize], i + 1 == n)? {
            if v.at_cell < n {
                return Err(BenchError::EarlyVerdict {
                    id: bf.id.clone(),
                    verdict: v.to_string(),
                    at: v.at_cell,
                    n,
                });
            }
        }
    }
    let total = start.elapsed();
    let total_ms = total.as_secs_f64() * 1e3;
    Ok(BenchRecord {
        formula: bf.id.clone(),
        n_cells: n,
        rep,
        compile_ms: compiled.as_secs_f64() * 1e3,
        total_ms,
        avg_ms_per_cell: total_ms / n as f64,
        seed,
    })
}

pub fn run_bench(formulas: &[BenchFormula], cfg: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    let mut out = Vec::new();
    for bf in formulas {
        for &n in &cfg.cells {
            for rep in 0..cfg.reps {
                out.push(bench_one(bf, n, rep, cfg)?);
            }
        }
    }
    Ok(out)
}

/// CSV with the header `formula,n_cells,rep,compile_ms,total_ms,avg_ms_per_cell,seed`.
pub fn to_csv(records: &[BenchRecord]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// State sizes after each reactivation while monitoring `n` non-final cells.
pub fn state_sizes(bf: &BenchFormula, n: usize, density: f64, seed: u64) -> Result<Vec<usize>, BenchError> {
    let (pool, picks) = cell_source(bf, n, density, seed)?;
    let sys = initialise(&bf.formula).map_err(|e| BenchError::Spec {
        line: 0,
        message: e.to_string(),
    })?;
    let mut m = Monitor::new(&sys, EvalMode::SinglePass);
    let mut sizes = Vec::with_capacity(n);
    for &p in &picks {
        if let Status::Done(v) = m.push(&pool[p as usize], false)? {
            return Err(BenchError::EarlyVerdict {
                id: bf.id.clone(),
                verdict: v.to_string(),
                at: v.at_cell,
                n,
            });
        }
        sizes.push(m.state().len());
    }
    Ok(sizes)
}

/// Least-squares fit `y = a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}
