use thiserror::Error;

/// Errors produced by the battery FDD toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter or configuration value violates its invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input that must be finite was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// Integration produced a non-finite value; `step` is the offending step index.
    #[error("non-finite state at integration step {step} (t = {time} s)")]
    IntegrationBlowup { step: usize, time: f64 },

    /// A lookup fell outside the valid domain (time span, grid, schedule).
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The requested basis size does not fit in a machine integer.
    #[error("basis term count overflows for n_germs = {n_germs}, order = {order}")]
    BasisOverflow { n_germs: usize, order: usize },

    /// Quadrature hit a non-finite integrand value at the given node.
    #[error("quadrature produced a non-finite value at node {node:?}")]
    QuadratureFailure { node: Vec<f64> },

    /// No optimizer start produced a usable result.
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    /// Linear solve failed (singular steady-state system).
    #[error("singular linear system: {0}")]
    SingularSystem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
