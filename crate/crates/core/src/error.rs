use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Kernel or potential evaluated outside its domain (for example t <= tau).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrability check failed: {0}")]
    Integrability(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Picard sweeps on a characteristic strip stopped contracting.
    #[error("non-contraction at X={x_char:.6}, Y={y_char:.6} (residual {residual:.3e}): {detail}")]
    NonContraction {
        x_char: f64,
        y_char: f64,
        residual: f64,
        detail: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    /// The Levi series did not decay; the Hölder quotient of theta is the usual suspect.
    #[error("series did not converge at order {order}: {detail}")]
    SeriesDivergence { order: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Failure inside one stage of a composite map.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
