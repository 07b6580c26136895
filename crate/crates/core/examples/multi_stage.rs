//! Solves the two-observation game for a few horizons and prints the size of
//! each stage partition together with the root values.

use otz_posg::fixtures::example3_model;
use otz_posg::value_iteration::solve_game;
use std::time::Instant;

fn main() -> otz_posg::Result<()> {
    let model = example3_model();
    for h in 1..=3 {
        let start = Instant::now();
        let bundle = solve_game(&model, h, 0.0)?;
        println!("horizon {h}  ({:.2?})", start.elapsed());
        for stage in &bundle.stages {
            println!(
                "  stage {}: {} refined regions, {} leaves, at most {} vertices (bound {})",
                stage.stage_index,
                stage.diagnostics.refined_regions,
                stage.partition.len(),
                stage.diagnostics.max_vertices(),
                stage.diagnostics.vertex_bound,
            );
        }
        println!("  v_L(b0) = {:.6}", bundle.root.leader_value);
        println!("  v_F(b0) = {:?}", bundle.root.follower_values);
    }
    Ok(())
}
