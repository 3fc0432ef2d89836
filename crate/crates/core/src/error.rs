use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands whose extents do not fit together.
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A row whose norm is below the normalization guard.
    #[error("degenerate row {row}: norm {norm:e} below eps")]
    DegenerateRow { row: usize, norm: f64 },

    /// A hyperparameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller-side precondition that does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity observed where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at record {record}: {message}")]
    Schema { record: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
