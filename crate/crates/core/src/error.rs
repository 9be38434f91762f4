use thiserror::Error;

/// Errors raised by the identification and control kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{function} is undefined at x = {x}")]
    Domain { function: &'static str, x: f64 },

    #[error("integration produced a non-finite derivative at component {component}")]
    Integration { component: usize },

    #[error("matrix is not positive definite (after {attempts} factorization attempts)")]
    NotPositiveDefinite { attempts: usize },

    #[error("Riccati recursion did not converge in {iterations} iterations (residual {residual:e})")]
    Unstabilizable { iterations: usize, residual: f64 },

    #[error("closed loop of the LQR design is not stable (spectral radius {spectral_radius})")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iteration did not converge in {iterations} iterations (|g| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("series too short: {len} samples, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dictionary has {terms} terms, cap is {cap}")]
    DictionaryTooLarge { terms: usize, cap: usize },

    #[error("inference failed in {term}: {detail}")]
    Inference { term: String, detail: String },

    #[error("predictive variance undefined for noise shape c = {c} (needs c > 1)")]
    UndefinedVariance { c: f64 },

    #[error("rollout produced a non-finite prediction at step {step}")]
    Rollout { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
