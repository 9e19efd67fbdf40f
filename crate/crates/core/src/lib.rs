//! Solver library for two-player zero-sum extensive-form games between an
//! adversary and a cooperative team.
//!
//! The team's joint action space is the cartesian product of the agents'
//! individual action spaces, so it grows exponentially with the team size.
//! This crate provides:
//!
//! - an abstract team-adversary game interface plus three concrete games
//!   (team Goofspiel, NEST grid pursuit, a tiny calibration game),
//! - tabular regret machinery and exact CFR / best-response / exploitability
//!   oracles for desk-scale games,
//! - the product-form decomposition of team cumulative regrets and its
//!   strategy-consistency checks,
//! - from-scratch regret/strategy networks where a multiplicative mixing
//!   layer combines shared-parameter agent outputs into joint regrets,
//! - the probe-sampling Monte Carlo CFR outer loop in `mix`, `joint` and
//!   `tabular` modes, and
//! - an experiment harness with config files, match-play evaluation, CSV
//!   metrics and binary checkpoints.

pub mod checkpoint;
pub mod decomposition;
pub mod eval;
pub mod game;
pub mod games;
pub mod harness;
pub mod neural;
pub mod regret;
pub mod report;
pub mod solver;
pub mod tabular;
#[doc(hidden)]
pub mod testutil;

pub use game::{
    AgentAction, Game, GameState, InfoSetKey, JointAction, LegalActions, Move, PlayerId,
};
