//! Game model: the tuple (players, states, observations, actions, transition,
//! observation function, follower reward, initial belief), its validation and
//! its JSON document format.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row sums of stochastic tables must be within this distance of 1.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Rows closer to 1 than this are left untouched by the loader.
const RENORMALIZE_EPS: f64 = 1e-12;

/// A probability distribution over states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("belief must have at least one entry".into()));
        }
        if let Some(v) = belief_violations(&probs).into_iter().next() {
            return Err(Error::InvalidArgument(v.to_string()));
        }
        Ok(Belief(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    /// The point mass on state `i`.
    pub fn corner(n: usize, i: usize) -> Self {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        Belief(p)
    }

    /// Normalizes a nonnegative vector; `None` when its mass is not positive.
    pub fn from_unnormalized(weights: &[f64]) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return None;
        }
        Some(Belief(weights.iter().map(|w| w / total).collect()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction {
    pub leader: usize,
    pub follower: usize,
}

impl JointAction {
    pub fn new(leader: usize, follower: usize) -> Self {
        JointAction { leader, follower }
    }
}

/// Unvalidated model tables, indexed in document order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelTables {
    pub states: Vec<String>,
    pub observations: Vec<String>,
    pub leader_actions: Vec<String>,
    pub follower_actions: Vec<String>,
    /// `transition[s][aL][aF][s']`
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `observation_fn[s'][o]`
    pub observation_fn: Vec<Vec<f64>>,
    /// `reward[s][aL][aF]`, the follower's stage reward.
    pub reward: Vec<Vec<Vec<f64>>>,
    pub initial_belief: Vec<f64>,
}

/// One violated model invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub table: String,
    pub index: Vec<usize>,
    pub observed: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)?;
        for i in &self.index {
            write!(f, "[{i}]")?;
        }
        write!(f, ": {} (observed {})", self.message, self.observed)
    }
}

fn violation(table: &str, index: Vec<usize>, observed: f64, message: impl Into<String>) -> Violation {
    Violation {
        table: table.to_string(),
        index,
        observed,
        message: message.into(),
    }
}

fn check_distribution(table: &str, index: Vec<usize>, row: &[f64], out: &mut Vec<Violation>) {
    let mut ok = true;
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            let mut idx = index.clone();
            idx.push(j);
            out.push(violation(table, idx, p, "probability outside [0, 1]"));
            ok = false;
        }
    }
    if ok {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            out.push(violation(table, index, sum, format!("distribution sums to {sum}, expected 1")));
        }
    }
}

fn belief_violations(probs: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    check_distribution("initial_belief", Vec::new(), probs, &mut out);
    out
}

fn check_shape(table: &str, index: Vec<usize>, got: usize, expected: usize, out: &mut Vec<Violation>) -> bool {
    if got != expected {
        out.push(violation(
            table,
            index,
            got as f64,
            format!("expected {expected} entries, found {got}"),
        ));
        false
    } else {
        true
    }
}

fn check_labels(table: &str, labels: &[String], out: &mut Vec<Violation>) {
    if labels.is_empty() {
        out.push(violation(table, Vec::new(), 0.0, "must not be empty"));
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            out.push(violation(table, vec![i], i as f64, format!("duplicate identifier '{l}'")));
        }
    }
}

/// Every invariant violation of the tables; empty means valid.
pub fn validate(tables: &ModelTables) -> Vec<Violation> {
    let mut out = Vec::new();
    check_labels("states", &tables.states, &mut out);
    check_labels("observations", &tables.observations, &mut out);
    check_labels("leader_actions", &tables.leader_actions, &mut out);
    check_labels("follower_actions", &tables.follower_actions, &mut out);

    let n = tables.states.len();
    let nl = tables.leader_actions.len();
    let nf = tables.follower_actions.len();
    let no = tables.observations.len();

    if check_shape("transition", vec![], tables.transition.len(), n, &mut out) {
        for (s, by_leader) in tables.transition.iter().enumerate() {
            if !check_shape("transition", vec![s], by_leader.len(), nl, &mut out) {
                continue;
            }
            for (al, by_follower) in by_leader.iter().enumerate() {
                if !check_shape("transition", vec![s, al], by_follower.len(), nf, &mut out) {
                    continue;
                }
                for (af, row) in by_follower.iter().enumerate() {
                    if check_shape("transition", vec![s, al, af], row.len(), n, &mut out) {
                        check_distribution("transition", vec![s, al, af], row, &mut out);
                    }
                }
            }
        }
    }

    if check_shape("observation_fn", vec![], tables.observation_fn.len(), n, &mut out) {
        for (s, row) in tables.observation_fn.iter().enumerate() {
            if check_shape("observation_fn", vec![s], row.len(), no, &mut out) {
                check_distribution("observation_fn", vec![s], row, &mut out);
            }
        }
    }

    if check_shape("reward", vec![], tables.reward.len(), n, &mut out) {
        for (s, by_leader) in tables.reward.iter().enumerate() {
            if !check_shape("reward", vec![s], by_leader.len(), nl, &mut out) {
                continue;
            }
            for (al, row) in by_leader.iter().enumerate() {
                if !check_shape("reward", vec![s, al], row.len(), nf, &mut out) {
                    continue;
                }
                for (af, &r) in row.iter().enumerate() {
                    if !r.is_finite() {
                        out.push(violation("reward", vec![s, al, af], r, "reward must be finite"));
                    }
                }
            }
        }
    }

    if check_shape("initial_belief", vec![], tables.initial_belief.len(), n, &mut out) {
        out.extend(belief_violations(&tables.initial_belief));
    }
    out
}

fn renormalize(row: &mut [f64]) {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return;
    }
    let sum: f64 = row.iter().sum();
    let gap = (sum - 1.0).abs();
    if gap > RENORMALIZE_EPS && gap <= STOCHASTIC_TOL {
        row.iter_mut().for_each(|p| *p /= sum);
    }
}

/// A validated, immutable game model.
#[derive(Clone, Debug, PartialEq)]
pub struct GameModel {
    tables: ModelTables,
}

impl GameModel {
    /// Renormalizes rows whose sum is within tolerance of 1, then validates.
    pub fn new(mut tables: ModelTables) -> Result<Self> {
        tables
            .transition
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|row| renormalize(row));
        tables.observation_fn.iter_mut().for_each(|row| renormalize(row));
        renormalize(&mut tables.initial_belief);

        let violations = validate(&tables);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(GameModel { tables })
    }

    pub fn tables(&self) -> &ModelTables {
        &self.tables
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.tables)
    }

    pub fn n_states(&self) -> usize {
        self.tables.states.len()
    }

    pub fn n_observations(&self) -> usize {
        self.tables.observations.len()
    }

    pub fn n_leader_actions(&self) -> usize {
        self.tables.leader_actions.len()
    }

    pub fn n_follower_actions(&self) -> usize {
        self.tables.follower_actions.len()
    }

    /// All joint actions in (leader, follower) lexicographic order.
    pub fn joint_actions(&self) -> impl Iterator<Item = JointAction> + '_ {
        let nf = self.n_follower_actions();
        (0..self.n_leader_actions()).flat_map(move |l| (0..nf).map(move |f| JointAction::new(l, f)))
    }

    /// `T(next | state, action)`
    pub fn transition(&self, state: usize, action: JointAction, next: usize) -> f64 {
        self.tables.transition[state][action.leader][action.follower][next]
    }

    pub fn transition_row(&self, state: usize, action: JointAction) -> &[f64] {
        &self.tables.transition[state][action.leader][action.follower]
    }

    /// `Ξ(observation | state)`
    pub fn observation(&self, state: usize, observation: usize) -> f64 {
        self.tables.observation_fn[state][observation]
    }

    pub fn observation_row(&self, state: usize) -> &[f64] {
        &self.tables.observation_fn[state]
    }

    pub fn reward(&self, state: usize, action: JointAction) -> f64 {
        self.tables.reward[state][action.leader][action.follower]
    }

    /// The follower's reward matrix for `state`, rows indexed by leader action.
    pub fn reward_matrix(&self, state: usize) -> DMatrix<f64> {
        let rows = &self.tables.reward[state];
        DMatrix::from_fn(self.n_leader_actions(), self.n_follower_actions(), |i, j| rows[i][j])
    }

    pub fn min_reward(&self) -> f64 {
        self.tables.reward.iter().flatten().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_reward(&self) -> f64 {
        self.tables.reward.iter().flatten().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn initial_belief(&self) -> Belief {
        Belief(self.tables.initial_belief.clone())
    }

    pub fn with_initial_belief(&self, belief: Vec<f64>) -> Result<Self> {
        let mut tables = self.tables.clone();
        tables.initial_belief = belief;
        GameModel::new(tables)
    }

    /// A copy with every reward entry mapped through `f`.
    pub fn map_rewards(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut tables = self.tables.clone();
        tables
            .reward
            .iter_mut()
            .flatten()
            .flatten()
            .for_each(|r| *r = f(*r));
        GameModel { tables }
    }

    pub fn to_document(&self) -> ModelDocument {
        let t = &self.tables;
        let transition = t
            .states
            .iter()
            .zip(&t.transition)
            .map(|(s, by_leader)| {
                let inner = t
                    .leader_actions
                    .iter()
                    .zip(by_leader)
                    .map(|(al, by_follower)| {
                        let rows = t
                            .follower_actions
                            .iter()
                            .zip(by_follower)
                            .map(|(af, row)| (af.clone(), row.clone()))
                            .collect();
                        (al.clone(), rows)
                    })
                    .collect();
                (s.clone(), inner)
            })
            .collect();
        let observation_fn = t
            .states
            .iter()
            .zip(&t.observation_fn)
            .map(|(s, row)| (s.clone(), row.clone()))
            .collect();
        let reward = t
            .states
            .iter()
            .zip(&t.reward)
            .map(|(s, by_leader)| {
                let rows = t
                    .leader_actions
                    .iter()
                    .zip(by_leader)
                    .map(|(al, row)| (al.clone(), row.clone()))
                    .collect();
                (s.clone(), rows)
            })
            .collect();
        ModelDocument {
            states: t.states.clone(),
            observations: t.observations.clone(),
            leader_actions: t.leader_actions.clone(),
            follower_actions: t.follower_actions.clone(),
            transition,
            observation_fn,
            reward,
            initial_belief: t.initial_belief.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    /// SHA-256 of the compact canonical document, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_document()).expect("model document serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// The on-disk JSON model document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub states: Vec<String>,
    pub observations: Vec<String>,
    pub leader_actions: Vec<String>,
    pub follower_actions: Vec<String>,
    pub transition: IndexMap<String, IndexMap<String, IndexMap<String, Vec<f64>>>>,
    pub observation_fn: IndexMap<String, Vec<f64>>,
    pub reward: IndexMap<String, IndexMap<String, Vec<f64>>>,
    pub initial_belief: Vec<f64>,
}

fn lookup<'a, V>(map: &'a IndexMap<String, V>, keys: &[String], path: &str) -> Result<Vec<&'a V>> {
    if let Some(extra) = map.keys().find(|k| !keys.contains(k)) {
        return Err(Error::Schema(format!("{path}: unknown key '{extra}'")));
    }
    keys.iter()
        .map(|k| {
            map.get(k)
                .ok_or_else(|| Error::Schema(format!("{path}: missing entry for '{k}'")))
        })
        .collect()
}

impl ModelDocument {
    pub fn into_tables(self) -> Result<ModelTables> {
        let mut transition = Vec::with_capacity(self.states.len());
        for (s, by_leader) in self
            .states
            .iter()
            .zip(lookup(&self.transition, &self.states, "transition")?)
        {
            let mut rows_l = Vec::new();
            for (al, by_follower) in self.leader_actions.iter().zip(lookup(
                by_leader,
                &self.leader_actions,
                &format!("transition.{s}"),
            )?) {
                let rows = lookup(by_follower, &self.follower_actions, &format!("transition.{s}.{al}"))?;
                rows_l.push(rows.into_iter().cloned().collect());
            }
            transition.push(rows_l);
        }

        let observation_fn = lookup(&self.observation_fn, &self.states, "observation_fn")?
            .into_iter()
            .cloned()
            .collect();

        let mut reward = Vec::with_capacity(self.states.len());
        for (s, by_leader) in self.states.iter().zip(lookup(&self.reward, &self.states, "reward")?) {
            let rows = lookup(by_leader, &self.leader_actions, &format!("reward.{s}"))?;
            reward.push(rows.into_iter().cloned().collect());
        }

        Ok(ModelTables {
            states: self.states,
            observations: self.observations,
            leader_actions: self.leader_actions,
            follower_actions: self.follower_actions,
            transition,
            observation_fn,
            reward,
            initial_belief: self.initial_belief,
        })
    }
}

/// Parses and validates a JSON model document.
pub fn load_model(bytes: &[u8]) -> Result<GameModel> {
    let doc: ModelDocument = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    GameModel::new(doc.into_tables()?)
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<GameModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    load_model(&bytes)
}
