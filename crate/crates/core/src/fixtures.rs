//! Small reference games used throughout the tests and examples.

use crate::model::{GameModel, ModelTables};

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Two states, two actions per player, one uninformative observation and
/// identity dynamics. Rewards `[4, 2; 2, 7]` in `s1` and `[8, 6; 3, 4]` in
/// `s2`; the initial belief is the point mass on `s1`.
pub fn example1_model() -> GameModel {
    let identity = |s: usize| {
        let mut row = vec![0.0, 0.0];
        row[s] = 1.0;
        vec![vec![row.clone(), row.clone()], vec![row.clone(), row]]
    };
    GameModel::new(ModelTables {
        states: labels("s", 2),
        observations: vec!["o1".into()],
        leader_actions: labels("aL", 2),
        follower_actions: labels("aF", 2),
        transition: vec![identity(0), identity(1)],
        observation_fn: vec![vec![1.0], vec![1.0]],
        reward: vec![
            vec![vec![4.0, 2.0], vec![2.0, 7.0]],
            vec![vec![8.0, 6.0], vec![3.0, 4.0]],
        ],
        initial_belief: vec![1.0, 0.0],
    })
    .expect("example 1 is valid")
}

/// The rewards of [`example1_model`] with two noisy observations and
/// action-dependent dynamics. The initial belief is uniform.
pub fn example3_model() -> GameModel {
    // transition[s][aL][aF][s']
    let transition = vec![
        vec![vec![vec![0.3, 0.7], vec![0.0, 1.0]], vec![vec![0.8, 0.2], vec![0.5, 0.5]]],
        vec![vec![vec![0.9, 0.1], vec![0.8, 0.2]], vec![vec![0.1, 0.9], vec![0.0, 1.0]]],
    ];
    GameModel::new(ModelTables {
        states: labels("s", 2),
        observations: labels("o", 2),
        leader_actions: labels("aL", 2),
        follower_actions: labels("aF", 2),
        transition,
        observation_fn: vec![vec![0.6, 0.4], vec![0.1, 0.9]],
        reward: vec![
            vec![vec![4.0, 2.0], vec![2.0, 7.0]],
            vec![vec![8.0, 6.0], vec![3.0, 4.0]],
        ],
        initial_belief: vec![0.5, 0.5],
    })
    .expect("example 3 is valid")
}

/// A random valid model with the given dimensions and rewards in `[lo, hi]`.
pub fn random_model<R: rand::Rng>(
    rng: &mut R,
    states: usize,
    observations: usize,
    leader_actions: usize,
    follower_actions: usize,
    reward_range: (f64, f64),
) -> GameModel {
    let mut dist = |k: usize| {
        let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect::<Vec<_>>()
    };
    let transition = (0..states)
        .map(|_| {
            (0..leader_actions)
                .map(|_| (0..follower_actions).map(|_| dist(states)).collect())
                .collect()
        })
        .collect();
    let observation_fn = (0..states).map(|_| dist(observations)).collect();
    let initial_belief = dist(states);
    let reward = (0..states)
        .map(|_| {
            (0..leader_actions)
                .map(|_| {
                    (0..follower_actions)
                        .map(|_| rng.gen_range(reward_range.0..=reward_range.1))
                        .collect()
                })
                .collect()
        })
        .collect();
    GameModel::new(ModelTables {
        states: labels("s", states),
        observations: labels("o", observations),
        leader_actions: labels("aL", leader_actions),
        follower_actions: labels("aF", follower_actions),
        transition,
        observation_fn,
        reward,
        initial_belief,
    })
    .expect("random model is valid")
}
