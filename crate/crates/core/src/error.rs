use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A serialized record does not match the expected schema.
    #[error("schema error in {record}: {message}")]
    Schema { record: String, message: String },

    /// An input violates a type invariant or operation precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A linear-algebra routine failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// k-means could not produce non-empty clusters.
    #[error("clustering failed: {0}")]
    Clustering(String),

    /// Inverse kinematics did not converge to the requested position.
    #[error("target [{:.4}, {:.4}, {:.4}] is unreachable (residual {residual_mm:.2} mm)", target[0], target[1], target[2])]
    Unreachable { target: [f64; 3], residual_mm: f64 },

    /// A model artifact failed to load.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
