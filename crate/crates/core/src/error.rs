use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate spread: fewer than two distinct locations")]
    DegenerateSpread,
    #[error("duplicate location: sites {0} and {1} coincide (use jitter to perturb)")]
    DuplicateLocation(usize, usize),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("negative arc weight {value:e} below -eps ({context})")]
    NegativeArc { value: f64, context: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("resource guard: {0}")]
    Guard(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NegativeArc { .. } | Error::Invariant(_) => 3,
            Error::Guard(_) => 4,
            _ => 2,
        }
    }
}
