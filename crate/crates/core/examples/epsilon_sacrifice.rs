//! Compares the exact chain with sacrifice chains for a few values of ε.
//!
//! The follower gives up at most ε in total; the leader's cost never rises
//! by more than ε.

use otz_posg::fixtures::example3_model;
use otz_posg::value_iteration::{chain_values, solve_game, FollowerPlay};

fn main() -> otz_posg::Result<()> {
    let model = example3_model();
    let b0 = model.initial_belief();
    let exact = solve_game(&model, 2, 0.0)?;
    println!("exact: v_L = {:.6}  v_F = {:?}", exact.root.leader_value, exact.root.follower_values);
    for eps in [0.1, 0.5, 1.0] {
        let bundle = solve_game(&model, 2, eps)?;
        let mixed = chain_values(&bundle, &model, &b0, FollowerPlay::Solved)?;
        println!("eps = {eps}: budget per stage {:.4}", bundle.budget);
        for (s, (v, w)) in bundle.root.follower_values.iter().zip(&mixed.follower_values).enumerate() {
            println!("  s{}: v_F = {v:.6}  played = {w:.6}  loss = {:.6}", s + 1, v - w);
        }
        println!("  leader cost {:.6} (bound {:.6})", mixed.leader_value, bundle.root.leader_value + eps);
    }
    Ok(())
}
