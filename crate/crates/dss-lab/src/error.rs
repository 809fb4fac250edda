//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DssError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Picard iteration did not converge after {iterations} iterations (last update {last_update:.3e})")]
    PicardDivergence { iterations: usize, last_update: f64 },

    #[error("time step {dt:.3e} fell below the floor {floor:.3e}")]
    StepUnderflow { dt: f64, floor: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("initial density has minimum {min:.3e} below the admissible bound")]
    Negativity { min: f64 },

    #[error("solver failure at eps = {eps}: {source}")]
    AtEpsilon {
        eps: f64,
        #[source]
        source: Box<DssError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl DssError {
    /// True for failures of a numerical solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            DssError::PicardDivergence { .. }
            | DssError::StepUnderflow { .. }
            | DssError::Singular(_)
            | DssError::Fit(_)
            | DssError::Negativity { .. } => true,
            DssError::AtEpsilon { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DssError>;
