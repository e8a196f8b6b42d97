use serde_json::{json, Value};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("date {date} is outside the trading calendar ({first}..{last})")]
    OutOfRange {
        date: String,
        first: String,
        last: String,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("validation: {0}")]
    Validation(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular design: {message} (condition number {condition:.3e})")]
    SingularDesign { message: String, condition: f64 },

    #[error("collinear regressors: {}", columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Coverage(_) => "coverage",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Contract(_) => "contract",
            Error::InsufficientData(_) => "insufficient_data",
            Error::SingularDesign { .. } => "singular_design",
            Error::Collinear { .. } => "collinear",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidCorrelation(_) => "invalid_correlation",
            Error::Numerical(_) => "numerical",
            Error::EmptySelection(_) => "empty_selection",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularDesign { .. }
            | Error::Collinear { .. }
            | Error::Degenerate(_)
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub fn context(&self) -> Value {
        match self {
            Error::Parse { path, line, .. } => json!({ "path": path, "line": line }),
            Error::OutOfRange { date, first, last } => {
                json!({ "date": date, "first": first, "last": last })
            }
            Error::SingularDesign { condition, .. } => json!({ "condition": condition }),
            Error::Collinear { columns } => json!({ "columns": columns }),
            _ => Value::Null,
        }
    }

    /// Machine-readable diagnostic with `code`, `message` and `context`.
    pub fn diagnostic(&self) -> Value {
        json!({
            "code": self.code(),
            "message": self.to_string(),
            "context": self.context(),
        })
    }
}
