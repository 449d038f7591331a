use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("incompatible segmentation: {0}")]
    Segmentation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
