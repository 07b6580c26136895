//! Monte Carlo play of a solved bundle.
//!
//! Episode `i` of a run with seed `s` draws from ChaCha8 seeded with `s` on
//! stream `i`, so results do not depend on how episodes are scheduled.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::update_belief;
use crate::error::{Error, Result};
use crate::model::{Belief, GameModel, JointAction};
use crate::partition::{locate, BranchKey};
use crate::value_iteration::SolutionBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub belief: Vec<f64>,
    pub region: usize,
    pub state: usize,
    pub leader_action: usize,
    pub follower_action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub observation: usize,
    /// The leader's posterior was undefined and had to be replaced.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: u64,
    pub initial_state: usize,
    pub stages: Vec<StageRecord>,
    pub total_reward: f64,
}

impl EpisodeTrace {
    pub fn fallback_events(&self) -> usize {
        self.stages.iter().filter(|r| r.fallback).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    /// `None` for a single episode.
    pub std_error: Option<f64>,
    pub episodes: usize,
    pub seed: u64,
    pub fallback_events: usize,
}

fn check_bundle(model: &GameModel, bundle: &SolutionBundle) -> Result<()> {
    let hash = model.fingerprint();
    if hash != bundle.model_hash {
        return Err(Error::InvalidArgument(format!(
            "bundle was solved for model {} but this model is {hash}",
            bundle.model_hash
        )));
    }
    Ok(())
}

fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    WeightedIndex::new(weights.iter().map(|w| w.max(0.0)))
        .expect("distribution has positive mass")
        .sample(rng)
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

fn play(model: &GameModel, bundle: &SolutionBundle, seed: u64, episode: u64) -> Result<EpisodeTrace> {
    let mut rng = episode_rng(seed, episode);
    let mut belief = Belief::new(bundle.root.belief.clone())?;
    let initial_state = sample(&mut rng, belief.probs());
    let mut state = initial_state;
    let mut region = locate(&belief, &bundle.stages[0].partition)?;
    let mut stages = Vec::with_capacity(bundle.horizon);
    let mut total_reward = 0.0;
    for t in 0..bundle.horizon {
        let stage = &bundle.stages[t];
        let piece = &stage.pieces[region];
        let leader_action = sample(&mut rng, &piece.eta);
        let follower_action = sample(&mut rng, &piece.follower_policy[state]);
        let a = JointAction::new(leader_action, follower_action);
        let reward = model.reward(state, a);
        let next_state = sample(&mut rng, model.transition_row(state, a));
        let observation = sample(&mut rng, model.observation_row(next_state));

        let update = update_belief(&belief, a, observation, model);
        let fallback = !update.is_defined();
        let next = update.next_belief.unwrap_or_else(|| {
            let mut onehot = vec![0.0; model.n_states()];
            onehot[next_state] = 1.0;
            Belief::new(onehot).expect("point mass")
        });
        stages.push(StageRecord {
            belief: belief.probs().to_vec(),
            region,
            state,
            leader_action,
            follower_action,
            reward,
            next_state,
            observation,
            fallback,
        });
        total_reward += reward;
        if t + 1 < bundle.horizon {
            let link = stage.partition.regions[region].link_for(BranchKey::new(a, observation));
            region = match (link, fallback) {
                (Some(r), false) => r,
                _ => locate(&next, &bundle.stages[t + 1].partition)?,
            };
        }
        belief = next;
        state = next_state;
    }
    Ok(EpisodeTrace {
        episode,
        initial_state,
        stages,
        total_reward,
    })
}

/// One episode on substream 0 of `seed`.
pub fn rollout(model: &GameModel, bundle: &SolutionBundle, seed: u64) -> Result<EpisodeTrace> {
    check_bundle(model, bundle)?;
    play(model, bundle, seed, 0)
}

/// Episodes `0..n` of `seed`, in order.
pub fn rollouts(model: &GameModel, bundle: &SolutionBundle, n: usize, seed: u64) -> Result<Vec<EpisodeTrace>> {
    check_bundle(model, bundle)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| play(model, bundle, seed, i))
        .collect()
}

pub fn estimate_value(model: &GameModel, bundle: &SolutionBundle, n: usize, seed: u64) -> Result<ValueEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("episode count must be at least 1".into()));
    }
    check_bundle(model, bundle)?;
    let totals: Vec<(f64, usize)> = (0..n as u64)
        .into_par_iter()
        .map(|i| play(model, bundle, seed, i).map(|tr| (tr.total_reward, tr.fallback_events())))
        .collect::<Result<_>>()?;
    let mean = totals.iter().map(|t| t.0).sum::<f64>() / n as f64;
    let std_error = (n > 1).then(|| {
        let var = totals.iter().map(|t| (t.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Ok(ValueEstimate {
        mean,
        std_error,
        episodes: n,
        seed,
        fallback_events: totals.iter().map(|t| t.1).sum(),
    })
}

/// One JSON object per line.
pub fn write_traces_jsonl<W: Write>(traces: &[EpisodeTrace], mut out: W) -> Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example1_model, example3_model};
    use crate::value_iteration::solve_game;

    #[test]
    fn example1_rewards_come_from_the_s1_matrix() {
        let m = example1_model();
        let bundle = solve_game(&m, 1, 0.0).unwrap();
        for tr in rollouts(&m, &bundle, 200, 11).unwrap() {
            assert_eq!(tr.initial_state, 0);
            assert_eq!(tr.stages.len(), 1);
            assert!([4.0, 2.0, 7.0].contains(&tr.total_reward));
            // s1 best response to (5/7, 2/7) is the first column
            assert_eq!(tr.stages[0].follower_action, 0);
        }
    }

    #[test]
    fn seeded_rollout_is_reproducible() {
        let m = example3_model();
        let bundle = solve_game(&m, 2, 0.5).unwrap();
        assert_eq!(rollout(&m, &bundle, 9).unwrap(), rollout(&m, &bundle, 9).unwrap());
        let a = estimate_value(&m, &bundle, 500, 3).unwrap();
        let b = estimate_value(&m, &bundle, 500, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_beliefs_follow_bayes_updates() {
        let m = example3_model();
        let bundle = solve_game(&m, 2, 0.0).unwrap();
        for tr in rollouts(&m, &bundle, 50, 5).unwrap() {
            let r = &tr.stages[0];
            let b = Belief::new(r.belief.clone()).unwrap();
            let a = JointAction::new(r.leader_action, r.follower_action);
            let next = update_belief(&b, a, r.observation, &m).next_belief.unwrap();
            assert_eq!(next.probs(), tr.stages[1].belief.as_slice());
        }
    }

    #[test]
    fn single_episode_has_no_error_bar() {
        let m = example1_model();
        let bundle = solve_game(&m, 1, 0.0).unwrap();
        let est = estimate_value(&m, &bundle, 1, 0).unwrap();
        assert_eq!(est.std_error, None);
        assert!(estimate_value(&m, &bundle, 0, 0).is_err());
    }

    #[test]
    fn rejects_foreign_bundle() {
        let bundle = solve_game(&example1_model(), 1, 0.0).unwrap();
        assert!(rollout(&example3_model(), &bundle, 0).is_err());
    }

    #[test]
    fn jsonl_has_one_line_per_episode() {
        let m = example1_model();
        let bundle = solve_game(&m, 1, 0.0).unwrap();
        let traces = rollouts(&m, &bundle, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_traces_jsonl(&traces, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let back: EpisodeTrace = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, traces[0]);
    }
}
