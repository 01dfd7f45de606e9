use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("node {0} cannot be paired with itself")]
    SelfPair(usize),

    #[error("node count mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("frequency grid mismatch: {left} vs {right} bins")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid grid size {0}: must be even and at least 2")]
    InvalidGrid(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model is not well-posed: min |det(I - H)| = {min_det:e} at bin {bin}")]
    IllPosed { min_det: f64, bin: usize },

    #[error("model is not causal; time-domain simulation requires a causal model")]
    NonCausal,

    #[error("simulation diverged at sample {0}")]
    Diverged(usize),

    #[error("panel too short: {samples} samples, at least {required} required")]
    PanelTooShort { samples: usize, required: usize },

    #[error("non-finite sample in channel {channel} at index {index}")]
    NonFinite { channel: usize, index: usize },

    #[error("zero diagonal entry for channel {channel} at bin {bin}")]
    ZeroDiagonal { channel: usize, bin: usize },

    #[error("spectral matrix not positive definite at bin {bin} (condition number {condition:e})")]
    SingularBin { bin: usize, condition: f64 },

    #[error("spectral factorization did not converge after {iterations} iterations (residual {residual:e})")]
    FactorizationFailed { iterations: usize, residual: f64 },

    #[error(
        "filter taps do not fit the grid: tail energy fraction {fraction:e} beyond m/4 on a grid of {m} bins; use a larger grid"
    )]
    GridTooSmall { fraction: f64, m: usize },

    #[error("no frequency bin satisfies the robustness precondition for node {0}")]
    NoValidBin(usize),

    #[error("model has no measurement noise specification")]
    MissingMeasurementNoise,

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// True for failures of the numerical stages (singular bins, factorization, bound preconditions).
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::SingularBin { .. }
                | Error::FactorizationFailed { .. }
                | Error::GridTooSmall { .. }
                | Error::NoValidBin(_)
                | Error::Diverged(_)
                | Error::IllPosed { .. }
        )
    }

    /// True for input and configuration problems.
    pub fn is_validation(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::NodeOutOfRange { .. }
                | Error::SelfPair(_)
                | Error::SizeMismatch { .. }
                | Error::GridMismatch { .. }
                | Error::InvalidGrid(_)
                | Error::InvalidGraph(_)
                | Error::InvalidTransferFunction(_)
                | Error::InvalidModel(_)
                | Error::InvalidConfig(_)
                | Error::NonCausal
                | Error::PanelTooShort { .. }
                | Error::NonFinite { .. }
                | Error::ZeroDiagonal { .. }
                | Error::MissingMeasurementNoise
                | Error::Format(_)
        )
    }
}
