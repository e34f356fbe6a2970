use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("{quantity} is undefined for {count} sample(s)")]
    InsufficientSamples {
        quantity: &'static str,
        count: usize,
    },

    #[error("ratio undefined: every entry of the history is zero")]
    AllZeroHistory,

    #[error("zero population variance: expected perturbation is unbounded")]
    ZeroVariance,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("batch size mismatch: configured {expected}, got {actual}")]
    BatchSizeMismatch { expected: usize, actual: usize },

    #[error("asymptotic variance {value} at n = {n} is not positive")]
    NonPositiveAsymptoticVariance { n: u64, value: f64 },

    #[error("objective evaluation is not finite at {context}")]
    NonFiniteEvaluation { context: String },

    #[error("point z = {re}{im:+}i lies outside the domain: {reason}")]
    Domain {
        re: f64,
        im: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: refinements differ by {difference:e} (tolerance {tolerance:e})")]
    NonConvergence { difference: f64, tolerance: f64 },

    #[error("dataset of {dataset} patterns cannot supply batches of {batch}")]
    BatchExceedsDataset { batch: usize, dataset: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
