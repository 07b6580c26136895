//! Finite-horizon backups over belief-space partitions.
//!
//! Stage `t` of a horizon-`h` game is solved from stage `t+1`: the next
//! partition is pulled back through every branch, the pulled-back partitions
//! are intersected, and in each intersection the continuation value of every
//! joint action is a constant matrix `Φ`. The stage program with payoffs
//! `Υ + Φ` is then solved once per intersection and split into leaves by
//! which vertex minimizes `bᵀθ`.
//!
//! All θ vectors are stored on the shifted reward scale. `value_offset`
//! converts them back.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{is_vacuous, successor_matrix, update_belief};
use crate::error::{Error, Result};
use crate::model::{Belief, GameModel, JointAction};
use crate::partition::{backpropagate_partition, is_active, locate, refine, BranchKey, Partition, Region};
use crate::reward::{shift_rewards, unshift_value, ShiftRecord, DEFAULT_TARGET_LOWER};
use crate::stage_lp::{
    follower_best_response, lex_cmp_tol, stage_vertices, vertex_bound, ExtremePoint, StagePayoffs,
};

pub const DEFAULT_REGION_CAP: usize = 10_000;
/// Advantage below which uniform mixing costs the follower nothing.
const FREE_MIX: f64 = 1e-12;

/// The linear piece attached to one leaf region.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuePiece {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Pure best response per state.
    pub follower_br: Vec<usize>,
    /// Follower policy per state actually played, mixed when a sacrifice
    /// budget is available.
    pub follower_policy: Vec<Vec<f64>>,
    /// `Φ[s][aL][aF]`.
    pub phi: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub refined_regions: usize,
    /// Vertex count of the stage program of each refined region.
    pub vertex_counts: Vec<usize>,
    pub vertex_bound: u64,
}

impl StageDiagnostics {
    pub fn max_vertices(&self) -> usize {
        self.vertex_counts.iter().copied().max().unwrap_or(0)
    }
}

/// Value function and policies of one stage. `pieces[k]` belongs to
/// `partition.regions[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "StageDocument", try_from = "StageDocument")]
pub struct StageValueFunction {
    pub stage_index: usize,
    /// Amount to subtract from θ entries to undo the reward shift.
    pub value_offset: f64,
    pub partition: Partition,
    pub pieces: Vec<ValuePiece>,
    pub diagnostics: StageDiagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageEvaluation {
    pub region: usize,
    pub leader_value: f64,
    pub follower_values: Vec<f64>,
}

impl StageValueFunction {
    pub fn piece(&self, region: usize) -> &ValuePiece {
        &self.pieces[region]
    }

    /// Leader and follower values at `b` on the original reward scale.
    pub fn evaluate(&self, b: &Belief) -> Result<StageEvaluation> {
        let region = locate(b, &self.partition)?;
        let follower_values: Vec<f64> = self.pieces[region]
            .theta
            .iter()
            .map(|t| t - self.value_offset)
            .collect();
        Ok(StageEvaluation {
            region,
            leader_value: b.dot(&follower_values),
            follower_values,
        })
    }
}

/// The stage after the last one: nothing left to earn.
pub fn terminal_value(n_states: usize, n_leader: usize, horizon: usize) -> StageValueFunction {
    StageValueFunction {
        stage_index: horizon,
        value_offset: 0.0,
        partition: Partition::whole(n_states),
        pieces: vec![ValuePiece {
            theta: vec![0.0; n_states],
            eta: vec![1.0 / n_leader as f64; n_leader],
            follower_br: Vec::new(),
            follower_policy: Vec::new(),
            phi: Vec::new(),
        }],
        diagnostics: StageDiagnostics::default(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FutureRewardMatrices {
    pub region: usize,
    /// One `|A^L| × |A^F|` matrix per state.
    pub phi: Vec<DMatrix<f64>>,
}

/// `Φ^a_s = Σ_o Σ_{s'} Ξ(o|s') T(s'|s,a) θ^{cell(a,o)}_{s'}` for a region of
/// the refinement built from `next`.
pub fn compute_phi(region: &Region, next: &StageValueFunction, model: &GameModel) -> Result<FutureRewardMatrices> {
    let n = model.n_states();
    let mut phi = vec![DMatrix::zeros(model.n_leader_actions(), model.n_follower_actions()); n];
    for a in model.joint_actions() {
        for o in 0..model.n_observations() {
            let m = successor_matrix(a, o, model);
            if is_vacuous(&m) {
                continue;
            }
            let cell = region.link_for(BranchKey::new(a, o)).ok_or(Error::MissingProvenance {
                region: region.id,
                leader: a.leader,
                follower: a.follower,
                observation: o,
            })?;
            let theta = &next.pieces[cell].theta;
            for (s, p) in phi.iter_mut().enumerate() {
                p[(a.leader, a.follower)] += (0..n).map(|next_s| m[(next_s, s)] * theta[next_s]).sum::<f64>();
            }
        }
    }
    Ok(FutureRewardMatrices { region: region.id, phi })
}

/// Mixes the best response toward uniform play, spending at most `budget`
/// of the follower's stage value.
pub fn sacrifice_policy(delta_hat: &[f64], eta_hat: &[f64], payoff: &DMatrix<f64>, budget: f64) -> Vec<f64> {
    let k = delta_hat.len();
    if budget <= 0.0 {
        return delta_hat.to_vec();
    }
    let uniform = vec![1.0 / k as f64; k];
    let value = |delta: &[f64]| -> f64 {
        (0..payoff.nrows())
            .map(|a| eta_hat[a] * (0..k).map(|j| payoff[(a, j)] * delta[j]).sum::<f64>())
            .sum()
    };
    let gap = value(delta_hat) - value(&uniform);
    let kappa = if gap <= FREE_MIX { 1.0 } else { (budget / gap).min(1.0) };
    delta_hat
        .iter()
        .zip(&uniform)
        .map(|(d, u)| (1.0 - kappa) * d + kappa * u)
        .collect()
}

/// Vertices that can be the unique minimizer somewhere in `region`, in the
/// order given. Duplicated θ keep their first occurrence.
fn minimal_vertices(region: &Region, vertices: &[ExtremePoint], dim: usize) -> Result<Vec<usize>> {
    let mut distinct: Vec<usize> = Vec::new();
    for (k, v) in vertices.iter().enumerate() {
        if !distinct.iter().any(|&j| lex_cmp_tol(&vertices[j].theta, &v.theta).is_eq()) {
            distinct.push(k);
        }
    }
    let candidates: Vec<usize> = distinct
        .iter()
        .copied()
        .filter(|&k| {
            !distinct.iter().any(|&j| {
                j != k && vertices[j].theta.iter().zip(&vertices[k].theta).all(|(a, b)| *a <= *b)
            })
        })
        .collect();
    let mut survivors = Vec::new();
    for &k in &candidates {
        let pi = leaf_rows(region, vertices, k, &candidates);
        if is_active(&pi, dim)? {
            survivors.push(k);
        }
    }
    Ok(survivors)
}

fn leaf_rows(region: &Region, vertices: &[ExtremePoint], k: usize, against: &[usize]) -> Vec<Vec<f64>> {
    let mut pi = region.pi.clone();
    for &j in against {
        if j != k {
            pi.push(vertices[k].theta.iter().zip(&vertices[j].theta).map(|(a, b)| a - b).collect());
        }
    }
    pi
}

struct RegionSolution {
    leaves: Vec<(Region, ValuePiece)>,
    vertex_count: usize,
}

fn solve_region(
    region: &Region,
    next: &StageValueFunction,
    model: &GameModel,
    stage_index: usize,
    budget: f64,
) -> Result<RegionSolution> {
    let n = model.n_states();
    let phi = compute_phi(region, next, model)?.phi;
    let matrices: Vec<DMatrix<f64>> = phi
        .iter()
        .enumerate()
        .map(|(s, p)| model.reward_matrix(s) + p)
        .collect();
    let payoffs = StagePayoffs::new(matrices)?;
    let vertices = stage_vertices(&payoffs)?;
    if vertices.is_empty() {
        return Err(Error::NoVertices {
            stage: stage_index,
            region: region.id,
        });
    }
    let survivors = minimal_vertices(region, &vertices, n)?;
    if survivors.is_empty() {
        return Err(Error::NoVertices {
            stage: stage_index,
            region: region.id,
        });
    }
    let phi_rows: Vec<Vec<Vec<f64>>> = phi
        .iter()
        .map(|p| p.row_iter().map(|r| r.iter().copied().collect()).collect())
        .collect();
    // Leaf ids follow the tie-break order, so the lowest-id rule of `locate`
    // agrees with vertex selection on shared boundaries.
    let mut order = survivors.clone();
    order.sort_by(|&a, &b| {
        lex_cmp_tol(&vertices[a].theta, &vertices[b].theta).then_with(|| lex_cmp_tol(&vertices[a].eta, &vertices[b].eta))
    });
    let leaves = order
        .iter()
        .map(|&k| {
            let v = &vertices[k];
            let mut follower_br = Vec::with_capacity(n);
            let mut follower_policy = Vec::with_capacity(n);
            for p in &payoffs.matrices {
                let (action, _) = follower_best_response(&v.eta, p);
                let mut delta = vec![0.0; p.ncols()];
                delta[action] = 1.0;
                follower_policy.push(sacrifice_policy(&delta, &v.eta, p, budget));
                follower_br.push(action);
            }
            let leaf = Region {
                id: 0,
                pi: leaf_rows(region, &vertices, k, &survivors),
                provenance: region.provenance.clone(),
            };
            let piece = ValuePiece {
                theta: v.theta.clone(),
                eta: v.eta.clone(),
                follower_br,
                follower_policy,
                phi: phi_rows.clone(),
            };
            (leaf, piece)
        })
        .collect();
    Ok(RegionSolution {
        leaves,
        vertex_count: vertices.len(),
    })
}

/// One dynamic-programming step on the (already shifted) model.
pub fn backup(
    next: &StageValueFunction,
    model: &GameModel,
    stage_index: usize,
    budget: f64,
    region_cap: usize,
) -> Result<StageValueFunction> {
    let n = model.n_states();
    let mut branches = BTreeMap::new();
    for a in model.joint_actions() {
        for o in 0..model.n_observations() {
            if let Some(p) = backpropagate_partition(&next.partition, a, o, model)? {
                branches.insert(BranchKey::new(a, o), p);
            }
        }
    }
    let refined = refine(&branches, n, region_cap).map_err(|e| match e {
        Error::RegionCap { count, cap, .. } => Error::RegionCap {
            stage: stage_index,
            count,
            cap,
        },
        e => e,
    })?;

    let solved: Vec<RegionSolution> = refined
        .regions
        .par_iter()
        .map(|r| solve_region(r, next, model, stage_index, budget))
        .collect::<Result<_>>()?;

    let mut regions = Vec::new();
    let mut pieces = Vec::new();
    let mut vertex_counts = Vec::with_capacity(solved.len());
    for sol in solved {
        vertex_counts.push(sol.vertex_count);
        for (mut leaf, piece) in sol.leaves {
            leaf.id = regions.len();
            regions.push(leaf);
            pieces.push(piece);
        }
    }
    if regions.len() > region_cap {
        return Err(Error::RegionCap {
            stage: stage_index,
            count: regions.len(),
            cap: region_cap,
        });
    }
    Ok(StageValueFunction {
        stage_index,
        value_offset: 0.0,
        partition: Partition { dim: n, regions },
        pieces,
        diagnostics: StageDiagnostics {
            refined_regions: refined.len(),
            vertex_counts,
            vertex_bound: vertex_bound(model.n_leader_actions(), n, model.n_follower_actions()) as u64,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub region_cap: usize,
    /// Minimum reward after shifting.
    pub target_lower: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            region_cap: DEFAULT_REGION_CAP,
            target_lower: DEFAULT_TARGET_LOWER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootValues {
    pub belief: Vec<f64>,
    pub region: usize,
    pub leader_value: f64,
    pub follower_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    /// Fingerprint of the model document the bundle was solved for.
    pub model_hash: String,
    pub horizon: usize,
    pub epsilon: f64,
    /// Per-stage sacrifice budget `ε / (h + 1)`.
    pub budget: f64,
    pub shift: ShiftRecord,
    /// Stages `0..h`.
    pub stages: Vec<StageValueFunction>,
    pub root: RootValues,
}

impl SolutionBundle {
    pub fn stage(&self, t: usize) -> &StageValueFunction {
        &self.stages[t]
    }

    pub fn evaluate(&self, t: usize, b: &Belief) -> Result<StageEvaluation> {
        self.stages[t].evaluate(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

pub fn solve_game(model: &GameModel, horizon: usize, epsilon: f64) -> Result<SolutionBundle> {
    solve_game_with(model, horizon, epsilon, SolveOptions::default())
}

pub fn solve_game_with(model: &GameModel, horizon: usize, epsilon: f64, opts: SolveOptions) -> Result<SolutionBundle> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be finite and nonnegative, got {epsilon}")));
    }
    let (shifted, shift) = shift_rewards(model, opts.target_lower)?;
    let budget = epsilon / (horizon + 1) as f64;
    let mut next = terminal_value(model.n_states(), model.n_leader_actions(), horizon);
    let mut stages = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let mut stage = backup(&next, &shifted, t, budget, opts.region_cap)?;
        stage.value_offset = shift.c * (horizon - t) as f64;
        stages.push(stage.clone());
        next = stage;
    }
    stages.reverse();

    let b0 = model.initial_belief();
    let eval = stages[0].evaluate(&b0)?;
    debug_assert!((unshift_value(b0.dot(&stages[0].pieces[eval.region].theta), shift.c, horizon) - eval.leader_value).abs() < 1e-9);
    Ok(SolutionBundle {
        model_hash: model.fingerprint(),
        horizon,
        epsilon,
        budget,
        shift,
        stages,
        root: RootValues {
            belief: b0.into_inner(),
            region: eval.region,
            leader_value: eval.leader_value,
            follower_values: eval.follower_values,
        },
    })
}

/// Which follower policy an expectation is taken under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FollowerPlay {
    BestResponse,
    /// The stored, possibly mixed, policy.
    Solved,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainValues {
    pub leader_value: f64,
    pub follower_values: Vec<f64>,
}

/// Exact expected total reward from belief `b` at stage 0, for every true
/// initial state, when both players follow the bundle.
///
/// The active region of each later stage is the provenance link of the
/// current one for the realized joint action and observation.
pub fn chain_values(bundle: &SolutionBundle, model: &GameModel, b: &Belief, play: FollowerPlay) -> Result<ChainValues> {
    let region = locate(b, &bundle.stages[0].partition)?;
    let follower_values = (0..model.n_states())
        .map(|s| chain_value(bundle, model, 0, region, b, s, play))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainValues {
        leader_value: b.dot(&follower_values),
        follower_values,
    })
}

fn chain_value(
    bundle: &SolutionBundle,
    model: &GameModel,
    t: usize,
    region: usize,
    b: &Belief,
    s: usize,
    play: FollowerPlay,
) -> Result<f64> {
    let stage = &bundle.stages[t];
    let piece = &stage.pieces[region];
    let leaf = &stage.partition.regions[region];
    let nf = model.n_follower_actions();
    let mut total = 0.0;
    for (al, &pl) in piece.eta.iter().enumerate() {
        if pl <= 0.0 {
            continue;
        }
        for af in 0..nf {
            let pf = match play {
                FollowerPlay::BestResponse => f64::from(u8::from(piece.follower_br[s] == af)),
                FollowerPlay::Solved => piece.follower_policy[s][af],
            };
            if pf <= 0.0 {
                continue;
            }
            let a = JointAction::new(al, af);
            let mut value = model.reward(s, a);
            if t + 1 < bundle.horizon {
                for o in 0..model.n_observations() {
                    let m = successor_matrix(a, o, model);
                    let reach: f64 = (0..model.n_states()).map(|next| m[(next, s)]).sum();
                    if reach <= 0.0 {
                        continue;
                    }
                    let next_b = next_belief(b, a, o, s, model);
                    let next_region = match leaf.link_for(BranchKey::new(a, o)) {
                        Some(r) => r,
                        None => locate(&next_b, &bundle.stages[t + 1].partition)?,
                    };
                    for next in 0..model.n_states() {
                        let p = m[(next, s)];
                        if p > 0.0 {
                            value += p * chain_value(bundle, model, t + 1, next_region, &next_b, next, play)?;
                        }
                    }
                }
            }
            total += pl * pf * value;
        }
    }
    Ok(total)
}

/// Posterior after `(a, o)`; when `b` gives the observation no mass, the
/// posterior the leader would hold had it known the state was `state`.
pub(crate) fn next_belief(b: &Belief, a: JointAction, o: usize, state: usize, model: &GameModel) -> Belief {
    update_belief(b, a, o, model).next_belief.unwrap_or_else(|| {
        update_belief(&Belief::corner(model.n_states(), state), a, o, model)
            .next_belief
            .unwrap_or_else(|| b.clone())
    })
}

#[derive(Serialize, Deserialize)]
struct RegionDocument {
    id: usize,
    #[serde(rename = "Pi")]
    pi: Vec<Vec<f64>>,
    provenance: Vec<crate::partition::ProvenanceLink>,
    theta: Vec<f64>,
    eta: Vec<f64>,
    follower_br: Vec<usize>,
    follower_policy: Vec<Vec<f64>>,
    phi: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct StageDocument {
    stage_index: usize,
    value_offset: f64,
    dim: usize,
    regions: Vec<RegionDocument>,
    diagnostics: StageDiagnostics,
}

impl From<StageValueFunction> for StageDocument {
    fn from(v: StageValueFunction) -> Self {
        StageDocument {
            stage_index: v.stage_index,
            value_offset: v.value_offset,
            dim: v.partition.dim,
            regions: v
                .partition
                .regions
                .into_iter()
                .zip(v.pieces)
                .map(|(r, p)| RegionDocument {
                    id: r.id,
                    pi: r.pi,
                    provenance: r.provenance,
                    theta: p.theta,
                    eta: p.eta,
                    follower_br: p.follower_br,
                    follower_policy: p.follower_policy,
                    phi: p.phi,
                })
                .collect(),
            diagnostics: v.diagnostics,
        }
    }
}

impl TryFrom<StageDocument> for StageValueFunction {
    type Error = String;

    fn try_from(d: StageDocument) -> std::result::Result<Self, String> {
        let mut regions = Vec::with_capacity(d.regions.len());
        let mut pieces = Vec::with_capacity(d.regions.len());
        for (k, r) in d.regions.into_iter().enumerate() {
            if r.id != k {
                return Err(format!("region ids must be consecutive, found {} at position {k}", r.id));
            }
            if r.theta.len() != d.dim || r.pi.iter().any(|row| row.len() != d.dim) {
                return Err(format!("region {k} does not match dimension {}", d.dim));
            }
            regions.push(Region {
                id: r.id,
                pi: r.pi,
                provenance: r.provenance,
            });
            pieces.push(ValuePiece {
                theta: r.theta,
                eta: r.eta,
                follower_br: r.follower_br,
                follower_policy: r.follower_policy,
                phi: r.phi,
            });
        }
        Ok(StageValueFunction {
            stage_index: d.stage_index,
            value_offset: d.value_offset,
            partition: Partition { dim: d.dim, regions },
            pieces,
            diagnostics: d.diagnostics,
        })
    }
}
