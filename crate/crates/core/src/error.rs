use thiserror::Error;

pub type Result<T, E = ElimError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid method configuration: {0}")]
    Config(String),

    #[error("Newton iteration for root {root} of the {points}-point Gauss rule did not converge")]
    QuadratureNonConvergence { points: usize, root: usize },

    #[error("fixed-point iteration did not converge after {iterations} sweeps (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<ElimError>,
    },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("serialization failed: {0}")]
    Serialization(String),
}
