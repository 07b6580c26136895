//! Pulls the three-cell one-stage partition back through one joint action of
//! the two-observation game and reports which cells stay active.

use otz_posg::fixtures::example3_model;
use otz_posg::partition::{backpropagate_region, is_active};
use otz_posg::value_iteration::solve_game;
use otz_posg::JointAction;

fn main() -> otz_posg::Result<()> {
    let model = example3_model();
    let last = solve_game(&model, 1, 0.0)?.stages.remove(0);
    let a = JointAction::new(0, 0);
    for (o, name) in model.tables().observations.iter().enumerate() {
        println!("observation {name}");
        for region in &last.partition.regions {
            let pulled = backpropagate_region(&region.pi, a, o, &model).expect("branch is not vacuous");
            let rows: Vec<Vec<f64>> = pulled
                .iter()
                .map(|r| r.iter().map(|x| (x * 100.0).round() / 100.0).collect())
                .collect();
            println!("  cell {}: {:?} active = {}", region.id, rows, is_active(&pulled, model.n_states())?);
        }
    }
    Ok(())
}
