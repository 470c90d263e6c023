use std::fmt;

use sdr_cir::cot::{CacheError, CotError};
use sdr_cir::eval::{EvalError, QueryError};
use sdr_cir::store::StoreError;

pub const FORMAT: i32 = 2;
pub const IO: i32 = 3;
pub const PARTIAL_GENERATION: i32 = 4;
pub const MISSING_INPUT: i32 = 5;
pub const FAILED_QUERIES: i32 = 6;
pub const USAGE: i32 = 64;
pub const INTERRUPTED: i32 = 130;
pub const OTHER: i32 = 1;

/// A message plus the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(IO, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Io { .. } => IO,
            StoreError::NotFound(_) => MISSING_INPUT,
            _ => FORMAT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        let code = match &e {
            QueryError::Io { .. } => IO,
            _ => FORMAT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<CacheError> for Failure {
    fn from(e: CacheError) -> Self {
        let code = match &e {
            CacheError::Io { .. } => IO,
            CacheError::Parse { .. } => FORMAT,
        };
        Self::new(code, format!("description cache: {e}"))
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::MissingEmbedding { .. } | EvalError::MissingDescription(_) => MISSING_INPUT,
            EvalError::Io { .. } => IO,
            EvalError::InvalidConfig(_) => USAGE,
            EvalError::ThreadPool(_) => OTHER,
            EvalError::DuplicateQuery(_)
            | EvalError::EmptyDataset
            | EvalError::DimensionMismatch { .. }
            | EvalError::DescriptionSet { .. } => FORMAT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<CotError> for Failure {
    fn from(e: CotError) -> Self {
        let code = match &e {
            CotError::MissingApiKey => USAGE,
            CotError::Cache(CacheError::Io { .. }) => IO,
            CotError::Cache(CacheError::Parse { .. }) => FORMAT,
            _ => PARTIAL_GENERATION,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
