use otz_posg::belief::{observation_probs, successor_matrix, update_belief};
use otz_posg::fixtures::{example1_model, random_model};
use otz_posg::reward::shift_rewards;
use otz_posg::value_iteration::{sacrifice_policy, solve_game, solve_game_with, SolveOptions};
use otz_posg::{load_model, Belief, JointAction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dims() -> impl Strategy<Value = (u64, usize, usize, usize, usize)> {
    (any::<u64>(), 1usize..=3, 1usize..=3, 1usize..=3, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_documents_round_trip((seed, n, o, nl, nf) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, n, o, nl, nf, (-5.0, 5.0));
        let back = load_model(m.to_json().as_bytes()).unwrap();
        prop_assert_eq!(back.tables(), m.tables());
        prop_assert!(back.validate().is_empty());
    }

    #[test]
    fn observation_probabilities_sum_to_one((seed, n, o, nl, nf) in dims(), w in prop::collection::vec(0.01f64..1.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, n, o, nl, nf, (1.0, 2.0));
        let b = Belief::from_unnormalized(&w[..n]).unwrap();
        for a in m.joint_actions() {
            let p = observation_probs(&b, a, &m);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn posterior_ignores_belief_scale((seed, n, o) in (any::<u64>(), 1usize..=3, 1usize..=3), w in prop::collection::vec(0.01f64..1.0, 3), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, n, o, 2, 2, (1.0, 2.0));
        let b = Belief::from_unnormalized(&w[..n]).unwrap();
        let a = JointAction::new(1, 0);
        for obs in 0..o {
            let sm = successor_matrix(a, obs, &m);
            let mb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sm[(i, j)] * b.probs()[j]).sum()).collect();
            let kmb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sm[(i, j)] * k * b.probs()[j]).sum()).collect();
            let x = Belief::from_unnormalized(&mb).unwrap();
            let y = Belief::from_unnormalized(&kmb).unwrap();
            let u = update_belief(&b, a, obs, &m).next_belief.unwrap();
            for s in 0..n {
                prop_assert!((x.probs()[s] - y.probs()[s]).abs() <= 1e-12);
                prop_assert!((x.probs()[s] - u.probs()[s]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sacrifice_stays_within_budget(
        entries in prop::collection::vec(0.5f64..20.0, 9),
        eta in prop::collection::vec(0.0f64..1.0, 3),
        budget in 0.0f64..3.0,
    ) {
        let p = nalgebra::DMatrix::from_row_slice(3, 3, &entries);
        let total: f64 = eta.iter().sum::<f64>() + 1e-9;
        let eta: Vec<f64> = eta.iter().map(|x| x / total).collect();
        let (br, _) = otz_posg::stage_lp::follower_best_response(&eta, &p);
        let mut hat = vec![0.0; 3];
        hat[br] = 1.0;
        let mixed = sacrifice_policy(&hat, &eta, &p, budget);
        let value = |d: &[f64]| -> f64 { (0..3).map(|a| eta[a] * (0..3).map(|j| p[(a, j)] * d[j]).sum::<f64>()).sum() };
        prop_assert!(value(&hat) - value(&mixed) <= budget + 1e-12);
        prop_assert!((mixed.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(mixed.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn policies_do_not_depend_on_the_shift() {
    let base = solve_game(&example1_model(), 2, 0.0).unwrap();
    for c in [0.0, 5.0, 100.0] {
        let m = example1_model().map_rewards(|r| r + c);
        let b = solve_game(&m, 2, 0.0).unwrap();
        for (sa, sb) in base.stages.iter().zip(&b.stages) {
            assert_eq!(sa.partition.len(), sb.partition.len());
            for (pa, pb) in sa.pieces.iter().zip(&sb.pieces) {
                assert_eq!(pa.follower_br, pb.follower_br);
                assert!(pa.eta.iter().zip(&pb.eta).all(|(x, y)| (x - y).abs() <= 1e-9));
            }
        }
        assert!((b.root.leader_value - base.root.leader_value - 2.0 * c).abs() <= 1e-9);
    }
}

#[test]
fn shifted_solve_reports_original_scale() {
    // rewards in [2, 8]: a target of 10 forces c = 8, a target of 1 none
    let m = example1_model();
    let plain = solve_game(&m, 2, 0.0).unwrap();
    let opts = SolveOptions { target_lower: 10.0, ..SolveOptions::default() };
    let lifted = solve_game_with(&m, 2, 0.0, opts).unwrap();
    assert_eq!(lifted.shift.c, 8.0);
    assert_eq!(shift_rewards(&m, 10.0).unwrap().1.r_lower, 10.0);
    assert!((plain.root.leader_value - lifted.root.leader_value).abs() <= 1e-9);
    // and a model with negative rewards solves like its positive twin
    let negative = m.map_rewards(|r| r - 5.0);
    let neg = solve_game(&negative, 2, 0.0).unwrap();
    assert!((neg.root.leader_value - (plain.root.leader_value - 10.0)).abs() <= 1e-9);
}
