//! Readers and writers for case files: the AMPL-style `.dat` tables and
//! MATPOWER `.m` cases.

mod dat;
mod matpower;

use std::path::Path;

use thiserror::Error;

use crate::grid::{validate_grid, Grid, Violation};

pub use dat::{parse_dat, parse_dat_document, write_dat, DatDocument, DatTable};
pub use matpower::parse_matpower;

/// Values at or beyond this magnitude mean "unbounded" in `.dat` files.
pub const INFINITY_SENTINEL: f64 = 1e30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Semantic {
        line: Option<usize>,
        message: String,
    },
    #[error("case has no reference bus")]
    MissingReference,
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("cannot read case file: {0}")]
    Io(String),
}

impl CaseError {
    pub(crate) fn semantic(line: Option<usize>, message: impl Into<String>) -> Self {
        CaseError::Semantic {
            line,
            message: message.into(),
        }
    }
}

/// Runs grid validation and maps the first problem onto a case error.
pub(crate) fn check_grid(grid: Grid) -> Result<Grid, CaseError> {
    let report = validate_grid(&grid);
    if let Some(v) = report.violations.first() {
        if report.violations.contains(&Violation::MissingReference) {
            return Err(CaseError::MissingReference);
        }
        return Err(CaseError::semantic(None, v.to_string()));
    }
    Ok(grid)
}

/// Reads a case file, choosing the parser by extension (`.m` is MATPOWER,
/// anything else is `.dat`).
pub fn read_case(path: &Path) -> Result<Grid, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io(e.to_string()))?;
    if path.extension().is_some_and(|e| e == "m") {
        parse_matpower(&text)
    } else {
        parse_dat(&text)
    }
}
