//! Binary datasets: one instance per line, comma-separated 0/1 tokens.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::IoError;

/// An `M x N` matrix over {0,1}, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    num_vars: usize,
    cells: Vec<u8>,
    source: Option<PathBuf>,
}

impl Dataset {
    /// Builds a dataset from rows. Every row must have `num_vars` cells in {0,1}.
    pub fn from_rows<R: AsRef<[u8]>>(num_vars: usize, rows: &[R]) -> Result<Self, IoError> {
        let mut cells = Vec::with_capacity(rows.len() * num_vars);
        for (m, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != num_vars {
                return Err(IoError::Ragged { line: m + 1, expected: num_vars, found: row.len() });
            }
            if let Some(col) = row.iter().position(|&b| b > 1) {
                return Err(IoError::NonBinary { line: m + 1, col: col + 1, token: row[col].to_string() });
            }
            cells.extend_from_slice(row);
        }
        Ok(Dataset { num_vars, cells, source: None })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.cells.len().checked_div(self.num_vars).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.num_rows() == 0
    }

    pub fn row(&self, m: usize) -> &[u8] {
        &self.cells[m * self.num_vars..(m + 1) * self.num_vars]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks_exact(self.num_vars.max(1))
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// The dataset repeated `k` times.
    pub fn replicate(&self, k: usize) -> Dataset {
        Dataset { num_vars: self.num_vars, cells: self.cells.repeat(k), source: self.source.clone() }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 2);
        for row in self.rows() {
            for (i, b) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{b}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses dataset text. Width is taken from the first non-blank line and
/// enforced on the rest; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Dataset, IoError> {
    let mut num_vars = None;
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut width = 0;
        for (j, tok) in line.split(',').enumerate() {
            let tok = tok.trim();
            let bit = match tok {
                "0" => 0,
                "1" => 1,
                _ => return Err(IoError::NonBinary { line: line_no, col: j + 1, token: tok.to_string() }),
            };
            cells.push(bit);
            width += 1;
        }
        match num_vars {
            None => num_vars = Some(width),
            Some(n) if n != width => return Err(IoError::Ragged { line: line_no, expected: n, found: width }),
            Some(_) => {}
        }
    }
    Ok(Dataset { num_vars: num_vars.unwrap_or(0), cells, source: None })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    let mut data = parse_dataset(&text)?;
    data.source = Some(path.to_path_buf());
    Ok(data)
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, data.to_text()).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}
