//! Loads a model document, reports validation problems, and solves it.
//!
//! ```text
//! cargo run --example load_model -- crates/core/models/example3.json 2
//! ```

use otz_posg::value_iteration::solve_game;
use otz_posg::{load_model, load_model_file, Error};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/models/example1.json").to_string());
    let horizon: usize = args.next().and_then(|h| h.parse().ok()).unwrap_or(1);

    let model = match load_model_file(&path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{path}: {e}");
            std::process::exit(2);
        }
    };
    println!("{path}: {} states, {} observations", model.n_states(), model.n_observations());
    println!("fingerprint {}", model.fingerprint());
    match solve_game(&model, horizon, 0.0) {
        Ok(bundle) => println!("v_L(b0) = {:.6} at horizon {horizon}", bundle.root.leader_value),
        Err(e) => eprintln!("solve failed: {e}"),
    }

    // A broken document: the first transition row sums to 0.9.
    let mut doc: serde_json::Value = serde_json::from_str(&model.to_json()).expect("valid json");
    let t = model.tables();
    let row = &mut doc["transition"][&t.states[0]][&t.leader_actions[0]][&t.follower_actions[0]];
    let head = row[0].as_f64().unwrap_or(0.0);
    row[0] = serde_json::json!(head - 0.1);
    match load_model(doc.to_string().as_bytes()) {
        Err(Error::Invalid(violations)) => {
            for v in violations {
                println!("rejected: {v}");
            }
        }
        other => println!("unexpected: {other:?}"),
    }
}
