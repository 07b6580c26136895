//! Reference computations that avoid the partition machinery.

#![allow(dead_code)]

use nalgebra::DMatrix;
use otz_posg::belief::{successor_matrix, update_belief};
use otz_posg::stage_lp::{select_vertex, stage_solution, stage_vertices, ExtremePoint, StagePayoffs};
use otz_posg::{Belief, GameModel};

/// Leader policies on the simplex grid with spacing `1 / steps`.
pub fn policy_grid(n_leader: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == k {
            let mut p: Vec<f64> = cur.iter().map(|&c| c as f64 / steps as f64).collect();
            p.push(left as f64 / steps as f64);
            out.push(p);
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n_leader, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// `min_η Σ_i b_i max_j (ηᵀ P_i)_j` over the policy grid, for every belief.
pub fn grid_leader_values(matrices: &[DMatrix<f64>], beliefs: &[Vec<f64>], steps: usize) -> Vec<f64> {
    let nl = matrices[0].nrows();
    let nf = matrices[0].ncols();
    let mut best = vec![f64::INFINITY; beliefs.len()];
    let mut f = vec![0.0; matrices.len()];
    for eta in policy_grid(nl, steps) {
        for (i, p) in matrices.iter().enumerate() {
            f[i] = (0..nf)
                .map(|j| (0..nl).map(|a| eta[a] * p[(a, j)]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
        }
        for (k, b) in beliefs.iter().enumerate() {
            let v: f64 = b.iter().zip(&f).map(|(x, y)| x * y).sum();
            if v < best[k] {
                best[k] = v;
            }
        }
    }
    best
}

/// Solves the game at one belief by direct recursion over posteriors.
///
/// Rewards must already be positive. The last stage's vertex set is shared
/// because its payoffs do not depend on the belief.
pub struct PointOracle<'a> {
    model: &'a GameModel,
    last: Vec<ExtremePoint>,
    last_payoffs: StagePayoffs,
}

#[derive(Clone, Debug)]
pub struct PointValue {
    pub leader_value: f64,
    pub follower_values: Vec<f64>,
    pub eta: Vec<f64>,
}

impl<'a> PointOracle<'a> {
    pub fn new(model: &'a GameModel) -> Self {
        let last_payoffs = StagePayoffs::from_model(model).expect("positive rewards");
        let last = stage_vertices(&last_payoffs).expect("valid payoffs");
        PointOracle {
            model,
            last,
            last_payoffs,
        }
    }

    pub fn solve(&self, b: &Belief, stages_left: usize) -> PointValue {
        assert!(stages_left >= 1);
        let (payoffs, vertices) = if stages_left == 1 {
            (self.last_payoffs.clone(), self.last.clone())
        } else {
            let p = self.payoffs_at(b, stages_left);
            let v = stage_vertices(&p).expect("valid payoffs");
            (p, v)
        };
        let k = select_vertex(b, &vertices).expect("stage program has vertices");
        let sol = stage_solution(b, &payoffs, &vertices[k]);
        PointValue {
            leader_value: sol.leader_value,
            follower_values: sol.follower_values,
            eta: sol.eta,
        }
    }

    /// `Υ + Φ(b)` with `Φ` from the recursively solved posteriors.
    pub fn payoffs_at(&self, b: &Belief, stages_left: usize) -> StagePayoffs {
        let m = self.model;
        let n = m.n_states();
        let mut mats: Vec<DMatrix<f64>> = (0..n).map(|s| m.reward_matrix(s)).collect();
        for a in m.joint_actions() {
            for o in 0..m.n_observations() {
                let Some(next) = update_belief(b, a, o, m).next_belief else {
                    continue;
                };
                let v = self.solve(&next, stages_left - 1).follower_values;
                let sm = successor_matrix(a, o, m);
                for (s, mat) in mats.iter_mut().enumerate() {
                    mat[(a.leader, a.follower)] += (0..n).map(|s2| sm[(s2, s)] * v[s2]).sum::<f64>();
                }
            }
        }
        StagePayoffs::new(mats).expect("positive payoffs")
    }
}

/// Interval `[lo, hi]` of `b1` covered by a two-state region.
pub fn interval_2d(pi: &[Vec<f64>]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for r in pi {
        // r0 x + r1 (1 - x) <= 0  <=>  (r0 - r1) x <= -r1
        let slope = r[0] - r[1];
        if slope.abs() < 1e-15 {
            if r[1] > 1e-12 {
                return None;
            }
        } else if slope > 0.0 {
            hi = hi.min(-r[1] / slope);
        } else {
            lo = lo.max(-r[1] / slope);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Every expected row is matched by some row up to a positive factor.
pub fn rows_match_up_to_scaling(got: &[Vec<f64>], expected: &[[f64; 2]], tol: f64) -> bool {
    got.len() == expected.len()
        && expected.iter().all(|e| {
            got.iter().any(|g| {
                let gg: f64 = g.iter().map(|x| x * x).sum();
                let ge = g[0] * e[0] + g[1] * e[1];
                if gg == 0.0 || ge <= 0.0 {
                    return false;
                }
                let c = ge / gg;
                (c * g[0] - e[0]).abs() <= tol && (c * g[1] - e[1]).abs() <= tol
            })
        })
}
