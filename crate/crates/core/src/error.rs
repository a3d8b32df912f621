use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("direct path from loudspeaker {source_index} to point {point} needs {needed} taps but only {available} are available")]
    RirTooShort {
        point: usize,
        source_index: usize,
        needed: usize,
        available: usize,
    },

    #[error("source {source_index} coincides with receiver {point}")]
    CoincidentPositions { point: usize, source_index: usize },

    #[error("position {0:?} lies outside the room")]
    OutsideRoom([f64; 3]),

    #[error("wall reflection coefficient is infeasible: {0}")]
    InfeasibleAbsorption(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("Cholesky factorization of the dark-zone correlation matrix failed (regularization {regularization:.3e}); increase the regularization")]
    CholeskyFailed { regularization: f64 },

    #[error("singular trade-off: lambda_{index} + mu = 0")]
    SingularTradeOff { index: usize },

    #[error("rank condition violated: M_D * min(N, K + J - 1) = {available} < LJ = {required}")]
    RankCondition { available: usize, required: usize },

    #[error("missing weighting filter for control point {0}")]
    MissingWeighting(usize),

    #[error("desired signal at point {0} has zero energy")]
    ZeroDesiredEnergy(usize),

    #[error("empty metric window")]
    EmptyWindow,

    #[error("invalid RIR container: {0}")]
    InvalidContainer(String),

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
