//! Concrete game implementations: team Goofspiel, NEST grid pursuit-evasion
//! and a tiny one-shot calibration game with exhaustively solvable oracles.

mod goofspiel;
mod nest;
mod tiny_matrix;

pub use goofspiel::{Goofspiel, GoofspielSpec, PrizeOrder};
pub use nest::{Nest, NestSpec, NestTopology};
pub use tiny_matrix::{TinyMatrix, TinyMatrixSpec};

use thiserror::Error;

/// Validation failure while constructing a game from its spec.
#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid game spec: {0}")]
    Invalid(String),
    #[error("failed to read graph file: {0}")]
    GraphIo(#[from] std::io::Error),
    #[error("bad graph file line {line}: {reason}")]
    GraphParse { line: usize, reason: String },
}

impl SpecError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SpecError::Invalid(msg.into())
    }
}
