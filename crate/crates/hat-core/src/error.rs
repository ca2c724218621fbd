//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HatError {
    /// Syntax error while parsing a serialized tree. `pos` is a byte offset
    /// into the input.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// Structural invariant of a tree violated (unary internal node,
    /// duplicate label, fewer than two leaves, ...).
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown node: {0}")]
    UnknownNode(String),

    /// Generic input validation failure (domain errors, mismatched
    /// dimensions, missing p-values, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver hit its iteration cap without meeting tolerance.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// An internal invariant that should hold by construction failed.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, HatError>;
