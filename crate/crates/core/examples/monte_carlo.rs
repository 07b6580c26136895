//! Estimates the one-stage value by simulation and compares it with the
//! exact value.

use otz_posg::fixtures::example1_model;
use otz_posg::simulator::{estimate_value, rollout};
use otz_posg::value_iteration::solve_game;

fn main() -> otz_posg::Result<()> {
    let model = example1_model();
    let bundle = solve_game(&model, 1, 0.0)?;
    let est = estimate_value(&model, &bundle, 100_000, 7)?;
    let se = est.std_error.unwrap_or(0.0);
    println!("exact    {:.4}", bundle.root.leader_value);
    println!("estimate {:.4} ± {:.4} over {} episodes", est.mean, se, est.episodes);
    println!("z = {:.2}", (est.mean - bundle.root.leader_value) / se);
    let trace = rollout(&model, &bundle, 7)?;
    println!("{}", serde_json::to_string(&trace)?);
    Ok(())
}
