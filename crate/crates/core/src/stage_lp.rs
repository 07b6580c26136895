//! One-stage Stackelberg program.
//!
//! For a belief `b` and per-state payoff matrices `P_i` (leader actions as
//! rows), the leader solves
//!
//! ```text
//! min_η  Σ_i b_i · max_j (ηᵀ P_i)_j
//! ```
//!
//! Substituting `μ = (η, f_2, …, f_n)` and `λ = f_1`, where `f_i` is the
//! follower's best-response value in state `i`, turns this into the linear
//! program
//!
//! ```text
//! min  cᵀμ + αλ   s.t.  Γμ <= βλ,  dᵀμ = 1,  0 <= μ <= μ̄,  r <= λ <= f̄
//! ```
//!
//! whose feasible polyhedron does not depend on `b`. Every optimum is attained
//! at a vertex, so the leader's value is `min_k bᵀθ_k` over the vertices
//! `θ_k = (λ, μ_{|A^L|+1}, …)`. Vertices are found by exhaustive basis search.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Belief, GameModel};

/// Constraint slack allowed when accepting a basic solution.
pub const FEAS_TOL: f64 = 1e-9;
/// Basic solutions closer than this (max-norm) are the same vertex.
pub const DEDUP_TOL: f64 = 1e-7;
/// Objective values closer than this are ties.
pub const TIE_TOL: f64 = 1e-9;
/// Relative pivot threshold below which a basis is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

/// Per-state payoff matrices of one stage, with bounds on their entries.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePayoffs {
    pub matrices: Vec<DMatrix<f64>>,
    pub r_lower: f64,
    pub f_upper: f64,
}

impl StagePayoffs {
    /// Takes the bounds from the smallest and largest entry.
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let (lo, hi) = matrices
            .iter()
            .flat_map(|m| m.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Self::with_bounds(matrices, lo, hi)
    }

    pub fn with_bounds(matrices: Vec<DMatrix<f64>>, r_lower: f64, f_upper: f64) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidArgument("stage payoffs need at least one state".into()));
        };
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 || matrices.iter().any(|m| m.shape() != shape) {
            return Err(Error::InvalidArgument(
                "stage payoff matrices must share one nonempty shape".into(),
            ));
        }
        let min = matrices.iter().flat_map(|m| m.iter()).copied().fold(f64::INFINITY, f64::min);
        let max = matrices.iter().flat_map(|m| m.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
        if r_lower.is_nan() || r_lower <= 0.0 || min < r_lower {
            return Err(Error::NonPositivePayoff { min: min.min(r_lower) });
        }
        if max > f_upper || !f_upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "upper bound {f_upper} is below the largest payoff {max}"
            )));
        }
        Ok(StagePayoffs {
            matrices,
            r_lower,
            f_upper,
        })
    }

    /// The model's own reward matrices.
    pub fn from_model(model: &GameModel) -> Result<Self> {
        Self::new((0..model.n_states()).map(|s| model.reward_matrix(s)).collect())
    }

    pub fn n_states(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_leader(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn n_follower(&self) -> usize {
        self.matrices[0].ncols()
    }
}

/// The linear program for one belief. Variables are `x = (μ, λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpInstance {
    pub gamma: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub c_obj: DVector<f64>,
    pub alpha: f64,
    pub d: DVector<f64>,
    pub mu_upper: DVector<f64>,
    pub lambda_bounds: (f64, f64),
    pub n_leader: usize,
    pub n_states: usize,
}

impl LpInstance {
    pub fn n_mu(&self) -> usize {
        self.n_leader + self.n_states - 1
    }

    pub fn objective(&self, mu: &[f64], lambda: f64) -> f64 {
        self.c_obj.iter().zip(mu).map(|(c, m)| c * m).sum::<f64>() + self.alpha * lambda
    }

    /// All inequalities as `g·x <= h`: the Γ rows, the box on μ, then the
    /// two bounds on λ.
    fn inequalities(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let m = self.n_mu();
        let dim = m + 1;
        let mut g = Vec::new();
        let mut h = Vec::new();
        for r in 0..self.gamma.nrows() {
            let mut row: Vec<f64> = self.gamma.row(r).iter().copied().collect();
            row.push(-self.beta[r]);
            g.push(row);
            h.push(0.0);
        }
        for i in 0..m {
            let mut lo = vec![0.0; dim];
            lo[i] = -1.0;
            g.push(lo);
            h.push(0.0);
            let mut hi = vec![0.0; dim];
            hi[i] = 1.0;
            g.push(hi);
            h.push(self.mu_upper[i]);
        }
        let mut lo = vec![0.0; dim];
        lo[m] = -1.0;
        g.push(lo);
        h.push(-self.lambda_bounds.0);
        let mut hi = vec![0.0; dim];
        hi[m] = 1.0;
        g.push(hi);
        h.push(self.lambda_bounds.1);
        (g, h)
    }
}

pub fn build_lp(b: &Belief, payoffs: &StagePayoffs) -> Result<LpInstance> {
    let n = payoffs.n_states();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "belief has {} entries for {n} states",
            b.len()
        )));
    }
    let payoffs = StagePayoffs::with_bounds(payoffs.matrices.clone(), payoffs.r_lower, payoffs.f_upper)?;
    let nl = payoffs.n_leader();
    let nf = payoffs.n_follower();
    let m = nl + n - 1;

    let mut gamma = DMatrix::zeros(n * nf, m);
    let mut beta = DVector::zeros(n * nf);
    for (i, p) in payoffs.matrices.iter().enumerate() {
        for j in 0..nf {
            let r = i * nf + j;
            for a in 0..nl {
                gamma[(r, a)] = p[(a, j)];
            }
            if i == 0 {
                beta[r] = 1.0;
            } else {
                gamma[(r, nl + i - 1)] = -1.0;
            }
        }
    }
    let mut c_obj = DVector::zeros(m);
    for i in 1..n {
        c_obj[nl + i - 1] = b.probs()[i];
    }
    let mut d = DVector::zeros(m);
    let mut mu_upper = DVector::from_element(m, payoffs.f_upper);
    for a in 0..nl {
        d[a] = 1.0;
        mu_upper[a] = 1.0;
    }
    Ok(LpInstance {
        gamma,
        beta,
        c_obj,
        alpha: b.probs()[0],
        d,
        mu_upper,
        lambda_bounds: (payoffs.r_lower, payoffs.f_upper),
        n_leader: nl,
        n_states: n,
    })
}

/// A vertex of the stage polyhedron.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremePoint {
    pub mu: Vec<f64>,
    pub lambda: f64,
    /// `(λ, μ_{|A^L|+1}, …, μ_{|A^L|+n-1})`; entry `i` bounds the follower's
    /// value in state `i`.
    pub theta: Vec<f64>,
    /// Leader mixed policy, the first `|A^L|` entries of μ.
    pub eta: Vec<f64>,
}

impl ExtremePoint {
    fn from_solution(x: &[f64], n_leader: usize) -> Self {
        let m = x.len() - 1;
        let mu = x[..m].to_vec();
        let lambda = x[m];
        let mut theta = Vec::with_capacity(m - n_leader + 1);
        theta.push(lambda);
        theta.extend_from_slice(&mu[n_leader..]);
        ExtremePoint {
            eta: mu[..n_leader].to_vec(),
            mu,
            lambda,
            theta,
        }
    }
}

/// Solves the square system in place; `None` when numerically singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= PIVOT_TOL * scale {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / a[r][r];
    }
    Some(x)
}

fn feasible(g: &[Vec<f64>], h: &[f64], x: &[f64]) -> bool {
    g.iter().zip(h).all(|(row, &rhs)| {
        let mut lhs = 0.0;
        let mut mag = rhs.abs().max(1.0);
        for (a, v) in row.iter().zip(x) {
            let t = a * v;
            lhs += t;
            mag = mag.max(t.abs());
        }
        lhs - rhs <= FEAS_TOL * mag
    })
}

/// Every vertex of the (bounded) feasible polyhedron, sorted
/// lexicographically by `(μ, λ)` and deduplicated.
pub fn enumerate_vertices(lp: &LpInstance) -> Vec<ExtremePoint> {
    let (g, h) = lp.inequalities();
    let dim = lp.n_mu() + 1;
    let mut eq_row: Vec<f64> = lp.d.iter().copied().collect();
    eq_row.push(0.0);

    let mut raw: Vec<Vec<f64>> = (0..g.len())
        .combinations(dim - 1)
        .par_bridge()
        .filter_map(|basis| {
            let mut a: Vec<Vec<f64>> = basis.iter().map(|&i| g[i].clone()).collect();
            let mut rhs: Vec<f64> = basis.iter().map(|&i| h[i]).collect();
            a.push(eq_row.clone());
            rhs.push(1.0);
            let x = solve_square(a, rhs)?;
            feasible(&g, &h, &x).then_some(x)
        })
        .collect();

    raw.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for x in raw {
        let dup = kept
            .iter()
            .rev()
            .take_while(|k| x[0] - k[0] <= DEDUP_TOL)
            .any(|k| k.iter().zip(&x).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !dup {
            kept.push(x);
        }
    }

    let r_lower = lp.lambda_bounds.0;
    kept.iter()
        .map(|x| ExtremePoint::from_solution(x, lp.n_leader))
        .filter(|v| v.theta.iter().all(|&t| t >= r_lower - FEAS_TOL))
        .collect()
}

/// Vertices of the stage polyhedron for the given payoffs.
pub fn stage_vertices(payoffs: &StagePayoffs) -> Result<Vec<ExtremePoint>> {
    let lp = build_lp(&Belief::uniform(payoffs.n_states()), payoffs)?;
    Ok(enumerate_vertices(&lp))
}

/// Lexicographic comparison treating entries within [`TIE_TOL`] as equal.
pub(crate) fn lex_cmp_tol(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > TIE_TOL {
            return x.total_cmp(y);
        }
    }
    std::cmp::Ordering::Equal
}

/// Index of the vertex minimizing `bᵀθ`; ties go to the lexicographically
/// smallest θ, then the smallest η.
pub fn select_vertex(b: &Belief, vertices: &[ExtremePoint]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in vertices.iter().enumerate() {
        let value = b.dot(&v.theta);
        best = match best {
            None => Some((k, value)),
            Some((j, bv)) => {
                let better = if value < bv - TIE_TOL {
                    true
                } else if value <= bv + TIE_TOL {
                    let w = &vertices[j];
                    lex_cmp_tol(&v.theta, &w.theta)
                        .then_with(|| lex_cmp_tol(&v.eta, &w.eta))
                        .is_lt()
                } else {
                    false
                };
                if better {
                    Some((k, value))
                } else {
                    Some((j, bv))
                }
            }
        };
    }
    best.map(|(k, _)| k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub action: usize,
    pub value: f64,
    /// The pure response as a mixed policy.
    pub policy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSolution {
    pub eta: Vec<f64>,
    pub leader_value: f64,
    pub follower_values: Vec<f64>,
    pub follower_best_responses: Vec<BestResponse>,
    /// The selected vertex.
    pub vertex: ExtremePoint,
}

/// Best pure follower response to `eta`; ties go to the lowest index.
pub fn follower_best_response(eta: &[f64], payoff: &DMatrix<f64>) -> (usize, f64) {
    let values: Vec<f64> = (0..payoff.ncols())
        .map(|j| eta.iter().enumerate().map(|(a, p)| p * payoff[(a, j)]).sum())
        .collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * max.abs().max(1.0);
    let action = values.iter().position(|&v| v >= max - tol).expect("nonempty payoff");
    (action, values[action])
}

/// Builds the equilibrium for `b` from an already selected vertex.
pub fn stage_solution(b: &Belief, payoffs: &StagePayoffs, vertex: &ExtremePoint) -> StageSolution {
    let nf = payoffs.n_follower();
    let mut follower_values = Vec::with_capacity(payoffs.n_states());
    let mut follower_best_responses = Vec::with_capacity(payoffs.n_states());
    for p in &payoffs.matrices {
        let (action, value) = follower_best_response(&vertex.eta, p);
        let mut policy = vec![0.0; nf];
        policy[action] = 1.0;
        // θ can exceed the best-response value only where b puts no mass.
        follower_values.push(value);
        follower_best_responses.push(BestResponse { action, value, policy });
    }
    StageSolution {
        eta: vertex.eta.clone(),
        leader_value: b.dot(&follower_values),
        follower_values,
        follower_best_responses,
        vertex: vertex.clone(),
    }
}

pub fn solve_stage(b: &Belief, payoffs: &StagePayoffs) -> Result<StageSolution> {
    let lp = build_lp(b, payoffs)?;
    let vertices = enumerate_vertices(&lp);
    let k = select_vertex(b, &vertices).ok_or(Error::EmptyStageLp)?;
    Ok(stage_solution(b, payoffs, &vertices[k]))
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Worst-case vertex count
/// `(|A^L|+|S|+|A^F||S|)! / ((|A^L|+|S|-1)! (|A^F||S|+1)!)`.
pub fn vertex_bound(n_leader: usize, n_states: usize, n_follower: usize) -> u128 {
    let total = (n_leader + n_states + n_follower * n_states) as u64;
    binomial(total, (n_leader + n_states - 1) as u64)
}
