//! Textual traces: `c - a - b,d - b,END`.
//!
//! Cells are separated by `-`, observations within a cell by `,`, and `_`
//! stands for an empty cell. A trailing `END` token in the last cell marks
//! the end of the trace; it is not an observation.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracle::{Cell, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("empty trace text")]
    Empty,
    #[error("cell {cell}: empty cell must be written as '_'")]
    EmptyCell { cell: usize },
    #[error("cell {cell}: empty observation between commas")]
    EmptyObservation { cell: usize },
    #[error("cell {cell}: END may only appear in the last cell")]
    EndNotLast { cell: usize },
    #[error("cell {cell}: invalid observation '{token}'")]
    BadToken { cell: usize, token: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("input ended after {cells} cells without END")]
    Unterminated { cells: usize },
    #[error("line {line}: {message}")]
    Io { line: usize, message: String },
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("density {0} is outside [0, 1]")]
    BadDensity(f64),
}

fn valid_observation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!(chars.next(), Some(c) if c.is_alphanumeric() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == ':')
        && token != "_"
}

/// Parses one cell. Returns the observations and whether `END` was present.
fn parse_cell(text: &str, cell: usize) -> Result<(Cell, bool), TraceError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(TraceError::EmptyCell { cell });
    }
    if text == "_" {
        return Ok((Cell::new(), false));
    }
    let mut obs = Cell::new();
    let mut end = false;
    for token in text.split(',').map(str::trim) {
        if token.is_empty() {
            return Err(TraceError::EmptyObservation { cell });
        }
        if end {
            // END must be the last token of its cell.
            return Err(TraceError::BadToken {
                cell,
                token: token.to_string(),
            });
        }
        match token {
            "END" => end = true,
            "_" => {}
            t if valid_observation(t) => {
                obs.insert(t.to_string());
            }
            t => {
                return Err(TraceError::BadToken {
                    cell,
                    token: t.to_string(),
                })
            }
        }
    }
    Ok((obs, end))
}

/// Parses a whole trace. The final cell is the last one whether or not it
/// carries `END`.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    if text.trim().is_empty() {
        return Err(TraceError::Empty);
    }
    let parts: Vec<&str> = text.split('-').collect();
    let mut cells = Vec::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        let (cell, end) = parse_cell(part, i + 1)?;
        if end && i + 1 != parts.len() {
            return Err(TraceError::EndNotLast { cell: i + 1 });
        }
        cells.push(cell);
    }
    Ok(Trace::new(cells))
}

fn serialize_cell(cell: &Cell) -> String {
    if cell.is_empty() {
        "_".to_string()
    } else {
        cell.iter().cloned().collect::<Vec<_>>().join(",")
    }
}

/// Inverse of [`parse_trace`]; the last cell gets an explicit `END`.
pub fn serialize(trace: &Trace) -> String {
    let n = trace.len();
    trace
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                if c.is_empty() {
                    "END".to_string()
                } else {
                    format!("{},END", serialize_cell(c))
                }
            } else {
                serialize_cell(c)
            }
        })
        .collect::<Vec<_>>()
        .join(" - ")
}

/// Random trace where each symbol occurs in each cell independently with
/// probability `density`.
pub fn gen_random_trace(alphabet: &[String], n_cells: usize, density: f64, seed: u64) -> Result<Trace, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Trace::new(
        RandomCells::new(alphabet, density, &mut rng)?
            .take(n_cells)
            .collect(),
    ))
}

/// Endless random cells; used to stream long traces without storing them.
pub struct RandomCells<'a, R: Rng> {
    alphabet: &'a [String],
    density: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng> RandomCells<'a, R> {
    pub fn new(alphabet: &'a [String], density: f64, rng: &'a mut R) -> Result<Self, TraceError> {
        if alphabet.is_empty() {
            return Err(TraceError::EmptyAlphabet);
        }
        if !(0.0..=1.0).contains(&density) {
            return Err(TraceError::BadDensity(density));
        }
        Ok(RandomCells { alphabet, density, rng })
    }
}

impl<R: Rng> Iterator for RandomCells<'_, R> {
    type Item = Cell;

    fn next(&mut self) -> Option<Cell> {
        let density = self.density;
        let rng = &mut *self.rng;
        Some(
            self.alphabet
                .iter()
                .filter(|_| rng.gen_bool(density))
                .cloned()
                .collect(),
        )
    }
}

/// Pull-based cells from line-oriented input: one cell per line, the cell
/// carrying `END` (or a line that is just `END`) is the last one.
pub struct CellStream<B> {
    input: B,
    line: usize,
    cells: usize,
    done: bool,
}

pub fn stream_cells<B: BufRead>(input: B) -> CellStream<B> {
    CellStream {
        input,
        line: 0,
        cells: 0,
        done: false,
    }
}

impl<B: BufRead> Iterator for CellStream<B> {
    type Item = Result<(Cell, bool), TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = String::new();
        loop {
            buf.clear();
            self.line += 1;
            match self.input.read_line(&mut buf) {
                Ok(0) => {
                    self.done = true;
                    return Some(Err(TraceError::Unterminated { cells: self.cells }));
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(TraceError::Io {
                        line: self.line,
                        message: e.to_string(),
                    }));
                }
            }
            if !buf.trim().is_empty() {
                break;
            }
        }
        self.cells += 1;
        let item = parse_cell(&buf, self.cells).map_err(|e| TraceError::Line {
            line: self.line,
            message: e.to_string(),
        });
        if matches!(item, Ok((_, true)) | Err(_)) {
            self.done = true;
        }
        Some(item)
    }
}
