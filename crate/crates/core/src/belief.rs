//! Bayes update of the leader's belief after a public joint action and an
//! observation.

use nalgebra::DMatrix;

use crate::model::{Belief, GameModel, JointAction};

/// Observation probabilities at or below this leave the posterior undefined.
pub const ZERO_PROB: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefUpdateResult {
    /// `None` when the observation has (numerically) zero probability.
    pub next_belief: Option<Belief>,
    pub observation_prob: f64,
}

impl BeliefUpdateResult {
    pub fn is_defined(&self) -> bool {
        self.next_belief.is_some()
    }
}

/// `M[s'][s] = Ξ(o | s') T(s' | s, a)`, so that the unnormalized posterior
/// is `M b`.
pub fn successor_matrix(action: JointAction, observation: usize, model: &GameModel) -> DMatrix<f64> {
    let n = model.n_states();
    DMatrix::from_fn(n, n, |next, state| {
        model.observation(next, observation) * model.transition(state, action, next)
    })
}

/// True when every entry of the successor matrix is numerically zero.
pub fn is_vacuous(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.abs() <= ZERO_PROB)
}

/// `M b` as a plain vector.
pub fn apply(m: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * b[j]).sum())
        .collect()
}

pub fn update_belief(b: &Belief, action: JointAction, observation: usize, model: &GameModel) -> BeliefUpdateResult {
    let numerator = apply(&successor_matrix(action, observation, model), b.probs());
    let observation_prob: f64 = numerator.iter().sum();
    let next_belief = if observation_prob > ZERO_PROB {
        Belief::from_unnormalized(&numerator)
    } else {
        None
    };
    BeliefUpdateResult {
        next_belief,
        observation_prob,
    }
}

/// Probability of each observation after `action` from belief `b`.
pub fn observation_probs(b: &Belief, action: JointAction, model: &GameModel) -> Vec<f64> {
    let n = model.n_states();
    let predicted: Vec<f64> = (0..n)
        .map(|next| (0..n).map(|s| model.transition(s, action, next) * b.probs()[s]).sum())
        .collect();
    (0..model.n_observations())
        .map(|o| (0..n).map(|next| model.observation(next, o) * predicted[next]).sum())
        .collect()
}
