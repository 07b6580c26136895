//! Enumerates the vertices of the one-stage program for the two-state
//! reward matrices and prints the leader's value along the belief simplex.

use otz_posg::fixtures::example1_model;
use otz_posg::stage_lp::{select_vertex, solve_stage, stage_vertices, vertex_bound, StagePayoffs};
use otz_posg::Belief;

fn main() -> otz_posg::Result<()> {
    let model = example1_model();
    let payoffs = StagePayoffs::from_model(&model)?;
    let vertices = stage_vertices(&payoffs)?;
    println!(
        "{} vertices (bound {})",
        vertices.len(),
        vertex_bound(model.n_leader_actions(), model.n_states(), model.n_follower_actions())
    );
    for v in &vertices {
        println!("  eta = {:?}  theta = {:?}", round(&v.eta), round(&v.theta));
    }

    println!("\n  b1     v_L     eta");
    for i in 0..=10 {
        let b1 = i as f64 / 10.0;
        let b = Belief::new(vec![b1, 1.0 - b1])?;
        let sol = solve_stage(&b, &payoffs)?;
        let k = select_vertex(&b, &vertices).expect("nonempty");
        assert_eq!(vertices[k].theta, sol.vertex.theta);
        println!("  {b1:.1}  {:7.4}  {:?}", sol.leader_value, round(&sol.eta));
    }
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0 + 0.0).collect()
}
