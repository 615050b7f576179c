use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("position {pos} out of range for chain of length {len}")]
    OutOfRange { pos: usize, len: usize },

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("visibility undefined: both central-peak heights vanish ({h0:e}, {h1:e})")]
    UndefinedVisibility { h0: f64, h1: f64 },
}
