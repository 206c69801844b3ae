//! Problem files: coordinates, metric, gauge field, potential, grid and constants.
//!
//! ```text
//! coordinates { r: (0, 20) theta: (0, pi) phi: (0, 2*pi) periodic }
//! metric { g[1,1] = 1  g[2,2] = r^2  g[3,3] = r^2*sin(theta)^2 }
//! potential { W = -1/r }
//! grid { r: 64 theta: 16 phi: 16 }
//! constants { mass = 1 hbar = 1 }
//! ```

mod expr;
mod lexer;
mod problem;

use std::fmt;

use thiserror::Error;

use crate::geometry::ChartError;

pub use expr::{BinOp, EvalError, Expression, Func, Node};
pub use lexer::Pos;
pub use problem::{parse_problem, ProblemSpec, Symmetry};

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    IndexOutOfRange { index: i64, dim: usize },
    AsymmetricMetric { p: usize, q: usize },
    MissingSection(String),
    UnknownKey(String),
    DuplicateEntry(String),
    MissingGridEntry(String),
    InvalidValue(String),
    Chart(ChartError),
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ErrorKind::IndexOutOfRange { index, dim } => {
                write!(f, "index {index} out of range 1..={dim}")
            }
            ErrorKind::AsymmetricMetric { p, q } => {
                write!(f, "metric entries g[{p},{q}] and g[{q},{p}] differ")
            }
            ErrorKind::MissingSection(s) => write!(f, "missing section `{s}`"),
            ErrorKind::UnknownKey(s) => write!(f, "unknown key `{s}`"),
            ErrorKind::DuplicateEntry(s) => write!(f, "duplicate entry `{s}`"),
            ErrorKind::MissingGridEntry(s) => write!(f, "no grid size for coordinate `{s}`"),
            ErrorKind::InvalidValue(m) => write!(f, "invalid value: {m}"),
            ErrorKind::Chart(e) => write!(f, "{e}"),
        }
    }
}

/// A diagnostic with its source position. Line 0 means "no position"
/// (specs built in code rather than parsed).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct DslError {
    pub kind: ErrorKind,
    pub line: usize,
    pub column: usize,
}

impl DslError {
    pub fn new(kind: ErrorKind, pos: Pos) -> Self {
        Self { kind, line: pos.line, column: pos.column }
    }

    pub(crate) fn unplaced(kind: ErrorKind) -> Self {
        Self { kind, line: 0, column: 0 }
    }
}

/// Parses a standalone expression over the given variable names.
pub fn parse_expression(text: &str, vars: &[&str]) -> Result<Expression, DslError> {
    Expression::parse(text, vars)
}
