//! Model files, datasets, curve export and random structure generation.

mod curve;
mod dataset;
mod format;
mod generate;

use std::path::PathBuf;

use thiserror::Error;

use crate::graph::ValidationReport;

pub use curve::{curve_csv, export_curve, summary_csv, CURVE_HEADER, SUMMARY_HEADER};
pub use dataset::{load_dataset, parse_dataset, write_dataset, Dataset};
pub use format::{
    load_spn, load_weights, parse_query, parse_spn, parse_weights, save_spn, serialize_spn, serialize_weights,
};
pub use generate::{generate_random_spn, GeneratorConfig};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}, column {col}: expected 0 or 1, found '{token}'")]
    NonBinary { line: usize, col: usize, token: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("{}invalid SPN: {report}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { line: Option<usize>, report: ValidationReport },
    #[error("malformed query: {0}")]
    Query(String),
}
