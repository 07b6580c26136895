mod common;

use std::collections::BTreeSet;

use common::PointOracle;
use otz_posg::belief::{apply, successor_matrix, update_belief};
use otz_posg::fixtures::{example1_model, example3_model};
use otz_posg::model::ModelTables;
use otz_posg::partition::{locate, sample_interior, BranchKey};
use otz_posg::value_iteration::{compute_phi, solve_game};
use otz_posg::{Belief, GameModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_belief(rng: &mut ChaCha8Rng, n: usize) -> Belief {
    // uniform on the simplex
    let w: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    Belief::from_unnormalized(&w).unwrap()
}

#[test]
fn every_point_is_covered_once() {
    let model = example3_model();
    let bundle = solve_game(&model, 3, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for stage in &bundle.stages {
        for _ in 0..100_000 {
            let b = random_belief(&mut rng, 2);
            let id = locate(&b, &stage.partition).unwrap();
            let containing = stage.partition.regions.iter().filter(|r| r.contains(b.probs())).count();
            assert!(containing >= 1);
            if containing > 1 {
                // only on a shared boundary, where the lowest id wins
                let first = stage.partition.regions.iter().position(|r| r.contains(b.probs())).unwrap();
                assert_eq!(first, id);
            }
        }
    }
}

#[test]
fn provenance_predicts_the_next_cell() {
    let model = example3_model();
    let bundle = solve_game(&model, 2, 0.0).unwrap();
    let (stage, next) = (bundle.stage(0), bundle.stage(1));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let actions: Vec<_> = model.joint_actions().collect();
    let mut checked = 0;
    while checked < 10_000 {
        let b = random_belief(&mut rng, 2);
        let a = actions[rng.gen_range(0..actions.len())];
        let o = rng.gen_range(0..model.n_observations());
        let up = update_belief(&b, a, o, &model);
        if up.observation_prob <= 1e-6 {
            continue;
        }
        let region = &stage.partition.regions[locate(&b, &stage.partition).unwrap()];
        let predicted = region.link_for(BranchKey::new(a, o)).unwrap();
        let next_b = up.next_belief.unwrap();
        assert!(next.partition.regions[predicted].contains(next_b.probs()));
        let located = locate(&next_b, &next.partition).unwrap();
        if located != predicted {
            // only possible on a boundary the two cells share
            assert!(next.partition.regions[located].contains(next_b.probs()));
        }
        checked += 1;
    }
}

#[test]
fn refined_cells_match_sampled_signatures() {
    let model = example3_model();
    let bundle = solve_game(&model, 2, 0.0).unwrap();
    let (stage, next) = (bundle.stage(0), bundle.stage(1));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut signatures = BTreeSet::new();
    for _ in 0..100_000 {
        let b = random_belief(&mut rng, 2);
        let mut sig = Vec::new();
        for a in model.joint_actions() {
            for o in 0..model.n_observations() {
                let mb = apply(&successor_matrix(a, o, &model), b.probs());
                let cell = next.partition.regions.iter().position(|r| r.contains(&mb)).unwrap();
                sig.push(cell);
            }
        }
        signatures.insert(sig);
    }
    let provenance: BTreeSet<Vec<usize>> = stage
        .partition
        .regions
        .iter()
        .map(|r| r.provenance.iter().map(|l| l.next_region).collect())
        .collect();
    assert_eq!(provenance.len(), stage.diagnostics.refined_regions);
    assert_eq!(signatures, provenance);
}

#[test]
fn phi_is_constant_over_each_region() {
    let model = example3_model();
    let bundle = solve_game(&model, 2, 0.0).unwrap();
    let (stage, next) = (bundle.stage(0), bundle.stage(1));
    let oracle = PointOracle::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for region in &stage.partition.regions {
        let phi = compute_phi(region, next, &model).unwrap().phi;
        for p in sample_interior(&region.pi, 2, &mut rng, 1000).unwrap() {
            let b = Belief::from_unnormalized(&p).unwrap();
            let direct = oracle.payoffs_at(&b, 2);
            for s in 0..2 {
                let expected = model.reward_matrix(s) + &phi[s];
                assert!((&direct.matrices[s] - expected).abs().max() <= 1e-6);
            }
        }
    }
}

#[test]
fn belief_independent_future_keeps_the_stage_split() {
    let mut tables: ModelTables = example3_model().tables().clone();
    for s in 0..2 {
        for al in 0..2 {
            for af in 0..2 {
                tables.transition[s][al][af] = vec![0.5, 0.5];
            }
        }
        tables.observation_fn[s] = vec![0.5, 0.5];
    }
    let model = GameModel::new(tables).unwrap();
    let bundle = solve_game(&model, 2, 0.0).unwrap();
    let first = bundle.stage(0);
    assert_eq!(first.diagnostics.refined_regions, 1);
    let phi = &first.pieces[0].phi;
    assert!(first.pieces.iter().all(|p| &p.phi == phi));
    assert_eq!(first.partition.len(), bundle.stage(1).partition.len());
}

#[test]
fn uniform_belief_locates_by_the_stage_tie_break() {
    let bundle = solve_game(&example1_model(), 1, 0.0).unwrap();
    let stage = bundle.stage(0);
    let b = Belief::uniform(2);
    let id = locate(&b, &stage.partition).unwrap();
    let payoffs = otz_posg::stage_lp::StagePayoffs::from_model(&example1_model()).unwrap();
    let sol = otz_posg::stage_lp::solve_stage(&b, &payoffs).unwrap();
    assert!(stage.pieces[id].theta.iter().zip(&sol.vertex.theta).all(|(x, y)| (x - y).abs() <= 1e-9));
}
