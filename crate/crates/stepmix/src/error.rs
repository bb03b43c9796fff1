use thiserror::Error;

/// Errors produced by model construction, fitting, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile `{id}`: {reason}")]
    InvalidProfile { id: String, reason: String },

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("assignment is not one-hot: {0}")]
    NotOneHot(String),

    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),

    #[error("invalid misclassification scenario: {0}")]
    InvalidScenario(String),

    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
