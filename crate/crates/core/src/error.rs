use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} is not in the margin support")]
    UnknownCategory { value: i64 },

    #[error("h-function inversion did not converge (q={q}, given={given}, params={params:?})")]
    InversionFailed { q: f64, given: f64, params: [f64; 5] },

    #[error("numerical failure at lattice position (variable {variable}, tree {tree}): {detail}")]
    Lattice {
        variable: usize,
        tree: usize,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step} aborted: {dropped} of {total} samples were non-finite")]
    StepAborted {
        step: usize,
        dropped: usize,
        total: usize,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InversionFailed { .. }
                | Error::Lattice { .. }
                | Error::Numerical(_)
                | Error::StepAborted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
