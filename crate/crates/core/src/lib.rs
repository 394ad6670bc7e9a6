//! Pipeline synthesis as a single-player game.
//!
//! A policy/value network proposes edit operations on a pipeline of primitives, a
//! Monte-Carlo tree search sharpens those proposals against real cross-validated
//! evaluations, and self-play trains the network toward the search's output.

pub mod catalog;
pub mod eval;
pub mod game;
pub mod mcts;
pub mod net;
pub mod sampler;
pub mod selfplay;
pub mod synthetic;
pub mod task;
pub mod trace;

pub use catalog::{validate_pipeline, Catalog, Category, Pipeline, PrimitiveSpec, Verdict};
pub use game::{
    action_space_size, apply_action, encode_state, is_terminal, legal_actions, replay_trace,
    ActionSpace, EditAction, GameState, MetaFeatures, StateVector,
};
pub use task::{Metric, TaskKind, TaskSpec};
pub use mcts::{run_search, SearchConfig, SearchResult};
pub use net::{NetParams, PolicyValue, TrainingExample};
pub use trace::{verify_replay, GameStatus, GameTrace, TraceFile};
pub use selfplay::{play_game, run_iterations, ExperimentConfig, GameSetup, IterationReport, SelfPlayConfig};
