use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{table}: row {row}: cannot parse {field}: {message}")]
    Parse {
        table: String,
        row: usize,
        field: String,
        message: String,
    },

    #[error("{table}: row {row}: {message}")]
    Schema {
        table: String,
        row: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("ontology cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate observation window for person {0}: no records at or after the visit start")]
    DegenerateWindow(String),

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("age {age:.1} < 18 requires height for the pediatric eGFR equation")]
    MissingHeight { age: f64 },

    #[error("all columns dropped: {0}")]
    EmptyTable(String),

    #[error("imputation impossible: {0}")]
    ImputationImpossible(String),

    #[error("empty model: every covariate was screened out")]
    EmptyModel,

    #[error("monotone likelihood: coefficient for {covariate} diverges")]
    NonIdentifiable { covariate: String },

    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        table: &str,
        row: usize,
        field: &str,
        message: impl std::fmt::Display,
    ) -> Self {
        Error::Parse {
            table: table.to_string(),
            row,
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    pub fn schema(table: &str, row: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            table: table.to_string(),
            row,
            message: message.into(),
        }
    }
}
