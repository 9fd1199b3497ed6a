use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::validate::ValidationReport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("{0} unbound")]
    Unbound(String),
}

/// Location in a source file (1-based line and column).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub file: Option<PathBuf>,
    pub line: usize,
    pub col: usize,
}

impl SourceSpan {
    pub fn new(line: usize, col: usize) -> Self {
        SourceSpan {
            file: None,
            line: line.max(1),
            col: col.max(1),
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(p) => write!(f, "{}:{}:{}", p.display(), self.line, self.col),
            None => write!(f, "{}:{}", self.line, self.col),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

impl ParseError {
    pub fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }

    pub fn with_file(mut self, file: impl Into<PathBuf>) -> Self {
        self.span.file = Some(file.into());
        self
    }
}

/// A distribution was given parameters outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{dist}: {message}")]
pub struct DomainError {
    pub dist: String,
    pub message: String,
}

impl DomainError {
    pub fn new(dist: &str, message: impl Into<String>) -> Self {
        DomainError {
            dist: dist.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChaseError {
    #[error("rule {rule} with binding [{binding}]: {source}")]
    Domain {
        rule: String,
        binding: String,
        #[source]
        source: DomainError,
    },
    #[error("rule {rule} with binding [{binding}]: parameter {param} is not numeric")]
    NonNumericParameter {
        rule: String,
        binding: String,
        param: String,
    },
    #[error("rule {rule} with binding [{binding}]: non-finite value {value}")]
    NonFinite {
        rule: String,
        binding: String,
        value: f64,
    },
    #[error("firing of rule {rule} is not applicable")]
    Inapplicable { rule: usize },
    #[error("value outside support: {value} has zero probability under {dist}")]
    OutsideSupport { dist: String, value: f64 },
    #[error("distributional firing needs exactly one of a choice or a random stream")]
    ChoiceMismatch,
    #[error("input fact {fact}: {reason}")]
    BadInput { fact: String, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid program:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Chase(#[from] ChaseError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid enumeration policy: {0}")]
    Policy(String),
    #[error("illegal input: the constraints hold with probability 0")]
    IllegalInput,
    #[error("undetermined legality: no enumerated outcome satisfies the constraints, unexplored mass {residual_mass}")]
    UndeterminedLegality { residual_mass: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
