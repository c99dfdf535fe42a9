use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpcError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("argument {value:e} is outside the domain of {what}")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error(
        "n_trunc = {n_trunc} is too small for tail tolerance {tol:e} at alpha = {alpha:e} \
         (tail ratio {ratio:e}); need n_trunc >= {required}"
    )]
    TruncationTooSmall {
        n_trunc: usize,
        tol: f64,
        alpha: f64,
        ratio: f64,
        required: usize,
    },

    #[error("source condition violated: reconstructed |w|^2 = {norm_sq:e} exceeds 1")]
    SourceViolation { norm_sq: f64 },

    #[error("coordinate index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("no sign change of the balance function for alpha in [{lo:e}, {hi:e}]")]
    BracketExhausted { lo: f64, hi: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sweep row at delta = {delta:e} failed: {source}")]
    RowFailed {
        delta: f64,
        #[source]
        source: Box<SpcError>,
    },
}

impl SpcError {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        SpcError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numeric search (as opposed to bad input).
    pub fn is_numeric_failure(&self) -> bool {
        match self {
            SpcError::BracketExhausted { .. } | SpcError::Degenerate(_) => true,
            SpcError::RowFailed { source, .. } => source.is_numeric_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SpcError>;

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SpcError::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
