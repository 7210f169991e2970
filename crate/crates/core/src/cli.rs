//! Command-line interface.
//!
//! Exit codes: 0 for SUCCESS or a clean check, 1 for FAILURE or a check with
//! mismatches, 2 for errors.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{default_formulas, parse_formula_list, run_bench, to_csv, BenchConfig};
use crate::check::{run_suite, SuiteConfig};
use crate::engine::{EngineError, EvalMode, Monitor, Outcome, Status, Verdict};
use crate::formula::parse_formula;
use crate::mapsem::{check_rewriting_chain, UntilBMap};
use crate::rulegen::initialise;
use crate::traceio::{parse_trace, stream_cells, TraceError};

#[derive(Debug, Parser)]
#[command(name = "rulerunner", version, about = "Compile FLTL formulas into rule systems and monitor traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixpoint,
    Singlepass,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fixpoint => EvalMode::Fixpoint,
            ModeArg::Singlepass => EvalMode::SinglePass,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UntilBArg {
    AsPrinted,
    Unfolding,
}

impl From<UntilBArg> for UntilBMap {
    fn from(v: UntilBArg) -> Self {
        match v {
            UntilBArg::AsPrinted => UntilBMap::AsPrinted,
            UntilBArg::Unfolding => UntilBMap::Unfolding,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the evaluation rules, reactivation rules and initial state.
    Compile { formula: String },
    /// Monitor a trace and print SUCCESS@k or FAILURE@k.
    Monitor {
        formula: String,
        /// File holding the trace, e.g. `c - a - b,d - b,END`.
        tracefile: Option<PathBuf>,
        /// Trace given on the command line instead of a file.
        #[arg(long, conflicts_with_all = ["tracefile", "stream"])]
        trace: Option<String>,
        /// Read one cell per line, from TRACEFILE (e.g. a named pipe) or
        /// standard input; END marks the last cell.
        #[arg(long)]
        stream: bool,
        /// Print the state evolution of every cell.
        #[arg(long)]
        explain: bool,
        #[arg(long, value_enum, default_value = "fixpoint")]
        mode: ModeArg,
    },
    /// Compare the monitor with the oracle on every formula and trace within bounds.
    Check {
        #[arg(long)]
        max_nodes: usize,
        #[arg(long)]
        max_len: usize,
        #[arg(long, value_delimiter = ',', default_value = "a,b")]
        alphabet: Vec<String>,
        /// Check early verdicts against all extensions of up to this many cells.
        #[arg(long)]
        horizon: Option<usize>,
        /// Compare single-pass and fixpoint evaluation on every cell.
        #[arg(long)]
        modes: bool,
        /// Check the judgement chain of eventually/always-free formulas.
        #[arg(long)]
        map: bool,
        /// With --map: print the state/judgement table of this formula...
        #[arg(long, requires = "map")]
        formula: Option<String>,
        /// ...over this trace.
        #[arg(long, requires = "formula")]
        trace: Option<String>,
        #[arg(long, value_enum, default_value = "as-printed")]
        until_b: UntilBArg,
        /// Only formulas with no temporal operator below F, G or U.
        #[arg(long)]
        single_instance: bool,
    },
    /// Time compilation and monitoring; prints CSV.
    Bench {
        /// Formula list, one `id; formula[; exclude=a,b][; always=c]` per line.
        #[arg(long)]
        formulas: Option<PathBuf>,
        /// Cell counts, e.g. 1e3,1e4,1e5.
        #[arg(long, value_delimiter = ',', value_parser = parse_count, default_value = "1e3,1e4,1e5")]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Probability of each symbol occurring in a cell.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, value_enum, default_value = "fixpoint")]
        mode: ModeArg,
    },
}

fn parse_count(s: &str) -> Result<usize, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if v < 1.0 || v.fract() != 0.0 || v > 1e12 {
        return Err(format!("not a positive cell count: {s}"));
    }
    Ok(v as usize)
}

fn color_enabled() -> bool {
    std::env::var("RR_COLOR").map(|v| v != "0").unwrap_or(true)
}

/// Runs the CLI with explicit streams; returns the exit code.
pub fn run_with<I, T>(args: I, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, stdin, out) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            2
        }
    }
}

/// Runs the CLI on the process arguments and standard streams.
pub fn run() -> i32 {
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(std::env::args_os(), &mut input, &mut out, &mut err)
}

fn verdict_code(v: &Verdict) -> i32 {
    match v.outcome {
        Outcome::Success => 0,
        Outcome::Failure => 1,
    }
}

fn io(e: std::io::Error) -> String {
    e.to_string()
}

fn execute(cmd: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, String> {
    match cmd {
        Command::Compile { formula } => {
            let f = parse_formula(&formula).map_err(|e| e.to_string())?;
            let sys = initialise(&f).map_err(|e| e.to_string())?;
            write!(out, "{}", sys.dump()).map_err(io)?;
            Ok(0)
        }
        Command::Monitor {
            formula,
            tracefile,
            trace,
            stream,
            explain,
            mode,
        } => {
            let f = parse_formula(&formula).map_err(|e| e.to_string())?;
            let sys = initialise(&f).map_err(|e| e.to_string())?;
            let mut m = Monitor::new(&sys, mode.into());
            if explain {
                m = m.with_explain();
            }
            let cells: Box<dyn Iterator<Item = Result<(crate::oracle::Cell, bool), TraceError>> + '_> = if stream {
                match tracefile {
                    Some(path) => {
                        let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                        Box::new(stream_cells(std::io::BufReader::new(file)))
                    }
                    None => Box::new(stream_cells(stdin)),
                }
            } else {
                let text = match (tracefile, trace) {
                    (_, Some(t)) => t,
                    (Some(path), None) => std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?,
                    (None, None) => return Err("give a trace file, --trace or --stream".into()),
                };
                let t = parse_trace(&text).map_err(|e| e.to_string())?;
                let n = t.len();
                Box::new(t.cells.into_iter().enumerate().map(move |(i, c)| Ok((c, i + 1 == n))))
            };
            let mut verdict = None;
            let mut failure: Option<EngineError> = None;
            for item in cells {
                let cell_no = m.state().cell_index();
                let (cell, last) = match item {
                    Ok(x) => x,
                    Err(TraceError::Unterminated { cells }) => {
                        failure = Some(EngineError::Unterminated { cell: cells });
                        break;
                    }
                    Err(e) => {
                        failure = Some(EngineError::Source {
                            cell: cell_no,
                            message: e.to_string(),
                        });
                        break;
                    }
                };
                match m.push(&cell, last) {
                    Ok(Status::Done(v)) => {
                        verdict = Some(v);
                        break;
                    }
                    Ok(Status::Pending) if last => {
                        failure = Some(EngineError::NoVerdict { cell: cell_no });
                        break;
                    }
                    Ok(Status::Pending) => {}
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            if explain {
                let color = color_enabled();
                for (i, block) in m.explain_blocks().iter().enumerate() {
                    if i > 0 {
                        writeln!(out).map_err(io)?;
                    }
                    write!(out, "{}", block.render(&sys, color)).map_err(io)?;
                }
            }
            if let Some(e) = failure {
                return Err(e.to_string());
            }
            let v = verdict.ok_or("trace ended without a verdict")?;
            writeln!(out, "{v}").map_err(io)?;
            Ok(verdict_code(&v))
        }
        Command::Check {
            max_nodes,
            max_len,
            alphabet,
            horizon,
            modes,
            map,
            formula,
            trace,
            until_b,
            single_instance,
        } => {
            if let Some(text) = formula {
                let f = parse_formula(&text).map_err(|e| e.to_string())?;
                let t = parse_trace(trace.as_deref().ok_or("--formula needs --trace")?).map_err(|e| e.to_string())?;
                let chain = check_rewriting_chain(&f, &t, until_b.into()).map_err(|e| e.to_string())?;
                let sys = initialise(&f).map_err(|e| e.to_string())?;
                let rows: Vec<(String, String, bool)> = chain
                    .steps
                    .iter()
                    .map(|s| (s.render_state(&sys), s.render_judgement(), s.valid))
                    .collect();
                let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(5).max(5);
                writeln!(out, "{:<width$} | map", "state").map_err(io)?;
                for (state, judgement, valid) in &rows {
                    let mark = if *valid { "" } else { "  <- invalid" };
                    writeln!(out, "{state:<width$} | {judgement}{mark}").map_err(io)?;
                }
                let ok = chain.all_valid() && chain.final_matches_verdict();
                return Ok(if ok { 0 } else { 1 });
            }
            if alphabet.len() > 4 || max_len == 0 && max_nodes > 0 {
                return Err("alphabet of at most 4 symbols and --max-len of at least 1 required".into());
            }
            let width = 1usize << alphabet.len();
            if width.checked_pow(max_len as u32).is_none_or(|lanes| lanes > 256) {
                return Err(format!(
                    "{} traces of length {max_len} exceed the 256-lane budget",
                    width.saturating_pow(max_len as u32)
                ));
            }
            let mut cfg = SuiteConfig::new(max_nodes, max_len, &[]);
            cfg.alphabet = alphabet;
            cfg.horizon = horizon;
            cfg.compare_modes = modes;
            cfg.map_chain = map;
            if single_instance {
                cfg.filter = Some(crate::check::single_instance);
            }
            let r = run_suite(&cfg);
            writeln!(out, "{}", r.summary()).map_err(io)?;
            for e in &r.examples {
                writeln!(out, "  {}: {} on {} ({})", e.kind, e.formula, e.trace, e.detail).map_err(io)?;
            }
            let mut clean = r.mismatches == 0 && r.irrevocability_violations == 0 && r.mode_divergences == 0;
            if map {
                clean &= r.map_violations[0].min(r.map_violations[1]) == 0;
            }
            Ok(if clean { 0 } else { 1 })
        }
        Command::Bench {
            formulas,
            cells,
            seed,
            reps,
            density,
            mode,
        } => {
            let list = match formulas {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    parse_formula_list(&text).map_err(|e| e.to_string())?
                }
                None => default_formulas(),
            };
            let cfg = BenchConfig {
                cells,
                seed,
                reps,
                density,
                mode: mode.into(),
            };
            let records = run_bench(&list, &cfg).map_err(|e| e.to_string())?;
            write!(out, "{}", to_csv(&records).map_err(|e| e.to_string())?).map_err(io)?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn run(args: &[&str], stdin: &str) -> (i32, String, String) {
        let mut input = Cursor::new(stdin.as_bytes().to_vec());
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut all = vec!["rulerunner"];
        all.extend_from_slice(args);
        let code = run_with(all, &mut input, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn compile_prints_sections() {
        let (code, out, _) = run(&["compile", "F a"], "");
        assert_eq!(code, 0);
        assert!(out.contains("# EVALUATION\n") && out.contains("# REACTIVATION\n") && out.contains("# INITIAL\n"));
        let (code, _, err) = run(&["compile", "a |"], "");
        assert_eq!(code, 2);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn monitor_inline_and_stream() {
        let (code, out, _) = run(&["monitor", "a|Fb", "--trace", "c - a - b,d - b,END"], "");
        assert_eq!((code, out.as_str()), (0, "SUCCESS@3\n"));
        let (code, out, _) = run(&["monitor", "a", "--trace", "_,END"], "");
        assert_eq!((code, out.as_str()), (1, "FAILURE@1\n"));
        let (code, out, _) = run(&["monitor", "F b", "--stream", "--mode", "singlepass"], "a\nb\n");
        assert_eq!((code, out.as_str()), (0, "SUCCESS@2\n"));
        let (code, _, err) = run(&["monitor", "F z", "--stream"], "a\nb\n");
        assert_eq!(code, 2);
        assert!(err.contains("without an END"), "{err}");
    }

    #[test]
    fn explain_without_color() {
        std::env::set_var("RR_COLOR", "0");
        let (code, out, _) = run(&["monitor", "a | F b", "--trace", "c - a - b,d - b,END", "--explain"], "");
        assert_eq!(code, 0);
        assert!(out.starts_with("state | R[a], R[b], R[F b], R[(a | F b)]B\n"), "{out}");
        assert!(!out.contains('\x1b'));
    }

    #[test]
    fn check_small_bounds() {
        let (code, out, _) = run(&["check", "--max-nodes", "0", "--max-len", "3", "--alphabet", "a,b"], "");
        assert_eq!(code, 0, "{out}");
        let (code, out, _) = run(&["check", "--max-nodes", "3", "--max-len", "2"], "");
        assert_eq!(code, 1, "{out}");
        assert!(out.contains("mismatches="));
        let (code, _, _) = run(&["check", "--max-nodes", "2", "--max-len", "5"], "");
        assert_eq!(code, 2);
    }

    #[test]
    fn check_map_table() {
        let (code, out, _) = run(&["check", "--max-nodes", "0", "--max-len", "1", "--map", "--formula", "a | X b", "--trace", "b - b"], "");
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 12);
        assert!(out.lines().last().unwrap().ends_with("| ⊤"));
    }

    #[test]
    fn bench_csv() {
        let (code, out, _) = run(&["bench", "--cells", "1e2,2e2", "--seed", "1", "--reps", "1"], "");
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 1 + 3 * 2);
        let (code, _, _) = run(&["bench", "--cells", "1.5"], "");
        assert_eq!(code, 2);
    }
}
