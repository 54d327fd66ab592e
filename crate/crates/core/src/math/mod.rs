//! Dense-network numerics: multilayer perceptrons with exact backprop, Adam,
//! categorical and diagonal-Gaussian utilities, and a finite-difference
//! gradient oracle.

mod adam;
mod dist;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dist::{
    categorical_entropy, diag_gaussian_kl, diag_gaussian_logpdf, softmax_rows,
    softmax_with_log, DiagGaussian, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub(crate) use dist::{clamp_log_var, gaussian_kl_1d};
pub use gradcheck::{gradient_check, FD_STEP};
pub use mlp::{Activation, ForwardCache, Layer, LayerGrads, Mlp, MlpGrads};

pub type RealVector = ndarray::Array1<f64>;
pub type RealMatrix = ndarray::Array2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
    #[error("forward cache does not match network: {0}")]
    CacheMismatch(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<(), MathError> {
    if expected == actual {
        Ok(())
    } else {
        Err(MathError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
