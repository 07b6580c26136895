//! Constant reward shifts. Adding the same constant to every reward entry
//! leaves equilibrium policies unchanged, so the solver lifts rewards until
//! they are bounded below by a positive value and subtracts the accumulated
//! shift from reported values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GameModel;

pub const DEFAULT_TARGET_LOWER: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    /// Constant added to every reward entry.
    pub c: f64,
    /// Minimum shifted reward.
    pub r_lower: f64,
    /// Maximum shifted reward.
    pub f_upper: f64,
}

pub fn shift_rewards(model: &GameModel, target_lower: f64) -> Result<(GameModel, ShiftRecord)> {
    if !target_lower.is_finite() || target_lower <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "reward lower bound target must be positive, got {target_lower}"
        )));
    }
    let c = (target_lower - model.min_reward()).max(0.0);
    let shifted = if c == 0.0 { model.clone() } else { model.map_rewards(|r| r + c) };
    let record = ShiftRecord {
        c,
        r_lower: shifted.min_reward(),
        f_upper: shifted.max_reward(),
    };
    Ok((shifted, record))
}

/// Maps a value accumulated over `stages_remaining` shifted stages back to the
/// original reward scale.
pub fn unshift_value(v: f64, c: f64, stages_remaining: usize) -> f64 {
    v - c * stages_remaining as f64
}
