use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Shapes or sizes are incompatible.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An iterative or direct solver failed.
    #[error("numerical failure in {context} after {iterations} iterations")]
    Numerical {
        context: &'static str,
        iterations: usize,
    },

    /// A least-squares design lacks full column rank.
    #[error("design is rank deficient: numerical rank {rank} of {required} columns")]
    RankDeficient { rank: usize, required: usize },

    /// The pruned instrument set cannot identify the model.
    #[error("model not identified: instrument rank {rank} < required {required}")]
    NotIdentified { rank: usize, required: usize },

    /// The projected second-stage design is numerically singular.
    #[error("degenerate design: condition number {condition:e}")]
    DegenerateDesign { condition: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
