//! Exact finite-horizon solver for turn-based one-sided two-player zero-sum
//! partially observable stochastic games with public actions.

pub mod belief;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod model;
pub mod partition;
pub mod reward;
pub mod simulator;
pub mod stage_lp;
pub mod value_iteration;

pub use error::{Error, Result};
pub use model::{load_model, load_model_file, Belief, GameModel, JointAction, ModelTables};
