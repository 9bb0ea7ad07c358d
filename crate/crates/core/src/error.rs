use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can surface.
///
/// Variants carry enough context (unit, row, column, chain, iteration) to be
/// reported without a backtrace.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaceError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unit {unit} is a defier (w0 = 1, w1 = 0)")]
    DefierPresent { unit: usize },
    #[error("population has no compliers")]
    NoCompliers,
    #[error("value {value} at {what}[{index}] is not binary")]
    NonBinary {
        what: &'static str,
        index: usize,
        value: i64,
    },
    #[error("invalid margins: n1 = {n1} must satisfy 0 < n1 < n = {n}")]
    BadMargins { n: usize, n1: usize },
    #[error("need at least 2 rows, got {rows}")]
    TooFewRows { rows: usize },
    #[error("covariance matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("probability {value} outside the open interval (0, 1)")]
    BadProbability { value: f64 },
    #[error("rerandomization did not accept within {tries} tries")]
    MaxTriesExceeded { tries: u64 },
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("observation {index} has leverage 1")]
    LeverageOne { index: usize },
    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },
    #[error("treatment arm {arm} has {size} units, need at least {needed}")]
    ArmTooSmall { arm: u8, size: usize, needed: usize },
    #[error("estimated ITT effect on treatment received is not positive ({itt_w})")]
    NonpositiveIttW { itt_w: f64 },
    #[error("posterior draw has no imputed compliers")]
    NoImputedCompliers,
    #[error("chain {chain}, iteration {iteration}: {source}")]
    Chain {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<CaceError>,
    },
    #[error("replication {rep}: {source}")]
    Replication {
        rep: usize,
        #[source]
        source: Box<CaceError>,
    },
    #[error("complier fraction target {target} infeasible: only {available} units can be compliers")]
    InfeasibleTarget { target: usize, available: usize },
    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: row {row}, column `{column}`: treatment indicator `{value}` is not 0 or 1", path.display())]
    NonBinaryTreatment {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{}: row {row}, column `{column}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl CaceError {
    /// Coarse classification used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        use CaceError::*;
        match self {
            Io { .. } => ErrorKind::Io,
            SingularCovariance { .. }
            | RankDeficient { .. }
            | LeverageOne { .. }
            | NonpositiveIttW { .. }
            | NoImputedCompliers
            | MaxTriesExceeded { .. } => ErrorKind::Numerical,
            Chain { source, .. } | Replication { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn in_chain(self, chain: usize, iteration: usize) -> Self {
        CaceError::Chain {
            chain,
            iteration,
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

pub type Result<T> = std::result::Result<T, CaceError>;
