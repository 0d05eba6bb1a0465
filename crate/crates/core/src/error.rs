use thiserror::Error;

/// Which of the two stacked state blocks an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateBlock {
    X1,
    X2,
}

impl std::fmt::Display for StateBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateBlock::X1 => f.write_str("x1"),
            StateBlock::X2 => f.write_str("x2"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{family}: argument {value} is outside the open interval (-1, 1)")]
    Domain { family: &'static str, value: f64 },

    #[error("{block}[{component}] = {value} is outside the safe set (bound {bound})")]
    OutOfSafeSet {
        block: StateBlock,
        component: usize,
        value: f64,
        bound: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Re-tags a safe-set violation with the block it belongs to.
    pub(crate) fn in_block(self, block: StateBlock) -> Self {
        match self {
            Error::OutOfSafeSet {
                component,
                value,
                bound,
                ..
            } => Error::OutOfSafeSet {
                block,
                component,
                value,
                bound,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
