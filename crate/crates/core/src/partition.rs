//! Polyhedral partitions of the belief simplex.
//!
//! A region is `{b in simplex : Π b <= 0}`. Membership is homogeneous, so any
//! positive multiple of a belief (in particular the unnormalized posterior
//! `M b`) lands in the same region. Next-stage regions are pulled back through
//! each branch `(a, o)` by `Π ↦ Π M`, and the pulled-back partitions of all
//! branches are intersected into a common refinement.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{is_vacuous, successor_matrix};
use crate::error::{Error, Result};
use crate::lp::{max_min_slack, maximize_over_region, row_norm};
use crate::model::{Belief, GameModel, JointAction};

/// Minimum inscribed slack for a region to count as active.
pub const ACTIVE_SLACK: f64 = 1e-9;
/// Relative tolerance of the membership test `row·b <= 0`.
pub const MEMBER_TOL: f64 = 1e-8;
/// A row whose maximum over the other constraints stays below this is dropped.
const REDUNDANT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchKey {
    pub action: JointAction,
    pub observation: usize,
}

impl BranchKey {
    pub fn new(action: JointAction, observation: usize) -> Self {
        BranchKey { action, observation }
    }
}

/// Which next-stage region a region maps into under one branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceLink {
    pub leader_action: usize,
    pub follower_action: usize,
    pub observation: usize,
    pub next_region: usize,
}

impl ProvenanceLink {
    pub fn branch(&self) -> BranchKey {
        BranchKey::new(JointAction::new(self.leader_action, self.follower_action), self.observation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    /// Constraint rows, each of length `|S|`.
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<f64>>,
    pub provenance: Vec<ProvenanceLink>,
}

impl Region {
    pub fn whole(id: usize) -> Self {
        Region {
            id,
            pi: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Membership of a nonnegative (not necessarily normalized) vector.
    pub fn contains(&self, b: &[f64]) -> bool {
        let mass: f64 = b.iter().map(|x| x.abs()).sum();
        self.pi.iter().all(|row| {
            let lhs: f64 = row.iter().zip(b).map(|(r, x)| r * x).sum();
            lhs <= MEMBER_TOL * row_norm(row) * mass
        })
    }

    pub fn is_active(&self, dim: usize) -> Result<bool> {
        is_active(&self.pi, dim)
    }

    /// The next-stage region this region maps into under `branch`.
    pub fn link_for(&self, branch: BranchKey) -> Option<usize> {
        self.provenance
            .iter()
            .find(|l| l.branch() == branch)
            .map(|l| l.next_region)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub dim: usize,
    pub regions: Vec<Region>,
}

impl Partition {
    /// The single region covering the whole simplex.
    pub fn whole(dim: usize) -> Self {
        Partition {
            dim,
            regions: vec![Region::whole(0)],
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region ids are their positions.
    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id]
    }

    /// The lowest-id region containing `b`. Accepts unnormalized vectors.
    pub fn locate_vec(&self, b: &[f64]) -> Result<usize> {
        self.regions
            .iter()
            .find(|r| r.contains(b))
            .map(|r| r.id)
            .ok_or_else(|| Error::CoverageGap { belief: b.to_vec() })
    }
}

pub fn locate(b: &Belief, partition: &Partition) -> Result<usize> {
    partition.locate_vec(b.probs())
}

/// True when the region has an inscribed point with slack at least
/// [`ACTIVE_SLACK`] with respect to its rows and the simplex faces.
pub fn is_active(pi: &[Vec<f64>], dim: usize) -> Result<bool> {
    if pi.is_empty() {
        return Ok(true);
    }
    let (t, _) = max_min_slack(pi, dim)?;
    Ok(t >= ACTIVE_SLACK)
}

/// Drops rows implied by the remaining rows on the simplex.
pub fn remove_redundant_rows(pi: Vec<Vec<f64>>, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = pi
        .into_iter()
        .filter(|r| row_norm(r) > 0.0 && r.iter().any(|x| *x > 0.0))
        .collect();
    let mut i = 0;
    while i < rows.len() {
        let others: Vec<&[f64]> = rows
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r.as_slice())
            .collect();
        let norm = row_norm(&rows[i]);
        let objective: Vec<f64> = rows[i].iter().map(|x| x / norm).collect();
        match maximize_over_region(&objective, &others, dim)? {
            Some(max) if max > REDUNDANT_TOL => i += 1,
            _ => {
                rows.remove(i);
            }
        }
    }
    Ok(rows)
}

/// Pulls a next-stage region back through branch `(action, observation)`:
/// `Π̄ = Π M`. `None` when the branch is vacuous (`M ≈ 0`).
pub fn backpropagate_region(
    pi_next: &[Vec<f64>],
    action: JointAction,
    observation: usize,
    model: &GameModel,
) -> Option<Vec<Vec<f64>>> {
    let m = successor_matrix(action, observation, model);
    if is_vacuous(&m) {
        return None;
    }
    Some(pull_back(pi_next, &m))
}

/// `Π M`, with rows that cancel to rounding noise set to exactly zero.
pub(crate) fn pull_back(pi_next: &[Vec<f64>], m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = m.ncols();
    let m_scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    pi_next
        .iter()
        .map(|row| {
            let out: Vec<f64> = (0..n)
                .map(|s| row.iter().enumerate().map(|(k, r)| r * m[(k, s)]).sum())
                .collect();
            let scale = row.iter().map(|x| x.abs()).sum::<f64>() * m_scale;
            if row_norm(&out) <= 1e-12 * scale {
                vec![0.0; n]
            } else {
                out
            }
        })
        .collect()
}

/// The active pulled-back cells of `next` under one branch. Region ids are
/// kept, so they name the next-stage cell. `None` for a vacuous branch.
pub fn backpropagate_partition(
    next: &Partition,
    action: JointAction,
    observation: usize,
    model: &GameModel,
) -> Result<Option<Partition>> {
    let m = successor_matrix(action, observation, model);
    if is_vacuous(&m) {
        return Ok(None);
    }
    let mut regions: Vec<Region> = Vec::new();
    for cell in &next.regions {
        let pi = pull_back(&cell.pi, &m);
        if !is_active(&pi, next.dim)? {
            continue;
        }
        // When M folds a full-dimensional set onto a shared boundary, the
        // lower-id cell owns it.
        let mut shadowed = false;
        for kept in &regions {
            if contains_region(&kept.pi, &pi, next.dim)? {
                shadowed = true;
                break;
            }
        }
        if !shadowed {
            regions.push(Region {
                id: cell.id,
                pi,
                provenance: Vec::new(),
            });
        }
    }
    Ok(Some(Partition {
        dim: next.dim,
        regions,
    }))
}

/// True when `{Π_inner b <= 0}` lies inside `{Π_outer b <= 0}` on the simplex.
fn contains_region(outer: &[Vec<f64>], inner: &[Vec<f64>], dim: usize) -> Result<bool> {
    let inner: Vec<&[f64]> = inner.iter().map(|r| r.as_slice()).collect();
    for row in outer {
        let norm = row_norm(row);
        if norm == 0.0 {
            continue;
        }
        let objective: Vec<f64> = row.iter().map(|x| x / norm).collect();
        if let Some(max) = maximize_over_region(&objective, &inner, dim)? {
            if max > REDUNDANT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Intersects one cell from every branch in all active combinations.
///
/// Branches are visited in key order and the result's region ids follow that
/// nested order. Fails once more than `cap` regions exist.
pub fn refine(per_branch: &BTreeMap<BranchKey, Partition>, dim: usize, cap: usize) -> Result<Partition> {
    let mut current: Vec<(Vec<Vec<f64>>, Vec<ProvenanceLink>)> = vec![(Vec::new(), Vec::new())];
    for (key, part) in per_branch {
        let children: Vec<Vec<_>> = current
            .par_iter()
            .map(|(rows, links)| -> Result<Vec<_>> {
                let mut out = Vec::new();
                for cell in &part.regions {
                    let mut pi = rows.clone();
                    pi.extend(cell.pi.iter().cloned());
                    if !is_active(&pi, dim)? {
                        continue;
                    }
                    let pi = remove_redundant_rows(pi, dim)?;
                    let mut links = links.clone();
                    links.push(ProvenanceLink {
                        leader_action: key.action.leader,
                        follower_action: key.action.follower,
                        observation: key.observation,
                        next_region: cell.id,
                    });
                    out.push((pi, links));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        current = children.into_iter().flatten().collect();
        if current.len() > cap {
            return Err(Error::RegionCap {
                stage: usize::MAX,
                count: current.len(),
                cap,
            });
        }
    }
    Ok(Partition {
        dim,
        regions: current
            .into_iter()
            .enumerate()
            .map(|(id, (pi, provenance))| Region { id, pi, provenance })
            .collect(),
    })
}

/// Hit-and-run samples from the interior of `{b in simplex : Π b <= 0}`.
///
/// Every sample keeps a positive margin from all rows and simplex faces.
pub fn sample_interior<R: Rng>(pi: &[Vec<f64>], dim: usize, rng: &mut R, count: usize) -> Result<Vec<Vec<f64>>> {
    let (t, center) = max_min_slack(pi, dim)?;
    if t < ACTIVE_SLACK {
        return Err(Error::InvalidArgument("region has no interior".into()));
    }
    if dim == 1 {
        return Ok(vec![center; count]);
    }
    let margin = 1e-3 * t;
    let rows: Vec<(Vec<f64>, f64)> = pi
        .iter()
        .filter(|r| row_norm(r) > 0.0)
        .map(|r| (r.clone(), row_norm(r)))
        .collect();
    let mut x = center;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut u: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mean = u.iter().sum::<f64>() / dim as f64;
        u.iter_mut().for_each(|v| *v -= mean);
        let norm = row_norm(&u);
        if norm < 1e-12 {
            continue;
        }
        u.iter_mut().for_each(|v| *v /= norm);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut clip = |a: f64, slope: f64| {
            // a + s·slope <= 0
            if slope > 0.0 {
                hi = hi.min(-a / slope);
            } else if slope < 0.0 {
                lo = lo.max(-a / slope);
            }
        };
        for (row, n) in &rows {
            let a: f64 = row.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() + margin * n;
            let slope: f64 = row.iter().zip(&u).map(|(r, v)| r * v).sum();
            clip(a, slope);
        }
        for s in 0..dim {
            clip(margin - x[s], -u[s]);
        }
        if !(lo <= 0.0 && hi >= 0.0) || hi - lo < 1e-15 {
            continue;
        }
        let step = rng.gen_range(lo..=hi);
        x.iter_mut().zip(&u).for_each(|(v, d)| *v += step * d);
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example3_model;

    fn fig2_cells() -> Vec<Vec<Vec<f64>>> {
        vec![
            vec![vec![1.67, -0.67], vec![3.57, -2.57]],
            vec![vec![-1.67, 0.67], vec![1.91, -1.91]],
            vec![vec![-3.57, 2.57], vec![-1.91, 1.91]],
        ]
    }

    fn assert_rows(got: &[Vec<f64>], expected: &[[f64; 2]], tol: f64) {
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(expected) {
            assert!((g[0] - e[0]).abs() < tol && (g[1] - e[1]).abs() < tol, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn backpropagates_example3_cells() {
        let m = example3_model();
        let a = JointAction::new(0, 0);
        let cells = fig2_cells();
        let p1 = backpropagate_region(&cells[0], a, 0, &m).unwrap();
        assert_rows(&p1, &[[0.25, 0.89], [0.46, 1.90]], 1e-2);
        let p1 = backpropagate_region(&cells[0], a, 1, &m).unwrap();
        assert_rows(&p1, &[[-0.22, 0.54], [-1.19, 1.05]], 1e-2);
        let zero = backpropagate_region(&[vec![0.0, 0.0]], a, 0, &m).unwrap();
        assert_eq!(zero, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn activity_of_example3_cells() {
        let m = example3_model();
        let a = JointAction::new(0, 0);
        let active = |o| {
            fig2_cells()
                .iter()
                .map(|c| is_active(&backpropagate_region(c, a, o, &m).unwrap(), 2).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(active(0), vec![false, false, true]);
        assert_eq!(active(1), vec![true, true, true]);
        assert!(!is_active(&[vec![1.0, 1.0]], 2).unwrap());
    }

    #[test]
    fn membership_is_scale_invariant() {
        let r = Region {
            id: 0,
            pi: vec![vec![-1.0, 1.0]],
            provenance: Vec::new(),
        };
        assert!(r.contains(&[0.7, 0.3]));
        assert!(r.contains(&[7.0, 3.0]));
        assert!(!r.contains(&[0.3, 0.7]));
        assert!(!r.contains(&[0.03, 0.07]));
    }

    #[test]
    fn redundant_rows_are_dropped() {
        // b1 >= 0.711 implies b1 >= 0.469
        let rows = vec![vec![-0.22, 0.54], vec![-1.19, 1.05]];
        let kept = remove_redundant_rows(rows, 2).unwrap();
        assert_eq!(kept, vec![vec![-0.22, 0.54]]);
        // duplicates keep one copy; nonpositive rows always hold
        let kept = remove_redundant_rows(vec![vec![1.0, -1.0], vec![1.0, -1.0], vec![-1.0, -2.0]], 2).unwrap();
        assert_eq!(kept, vec![vec![1.0, -1.0]]);
    }

    #[test]
    fn refine_trivial_and_product() {
        let mut branches = BTreeMap::new();
        branches.insert(BranchKey::new(JointAction::new(0, 0), 0), Partition::whole(2));
        branches.insert(BranchKey::new(JointAction::new(0, 1), 0), Partition::whole(2));
        let p = refine(&branches, 2, 100).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.regions[0].provenance.len(), 2);

        let three = Partition {
            dim: 2,
            regions: fig2_cells()
                .into_iter()
                .enumerate()
                .map(|(id, pi)| Region { id, pi, provenance: vec![] })
                .collect(),
        };
        branches.insert(BranchKey::new(JointAction::new(1, 0), 0), three);
        let p = refine(&branches, 2, 100).unwrap();
        assert_eq!(p.len(), 3);
        assert!(matches!(refine(&branches, 2, 2), Err(Error::RegionCap { .. })));
    }

    #[test]
    fn locate_breaks_ties_by_lowest_id() {
        let p = Partition {
            dim: 2,
            regions: vec![
                Region { id: 0, pi: vec![vec![1.0, -1.0]], provenance: vec![] },
                Region { id: 1, pi: vec![vec![-1.0, 1.0]], provenance: vec![] },
            ],
        };
        assert_eq!(locate(&Belief::new(vec![0.2, 0.8]).unwrap(), &p).unwrap(), 0);
        assert_eq!(locate(&Belief::new(vec![0.8, 0.2]).unwrap(), &p).unwrap(), 1);
        assert_eq!(locate(&Belief::uniform(2), &p).unwrap(), 0);
        let gap = Partition { dim: 2, regions: vec![p.regions[0].clone()] };
        assert!(matches!(locate(&Belief::new(vec![0.8, 0.2]).unwrap(), &gap), Err(Error::CoverageGap { .. })));
    }

    #[test]
    fn interior_samples_stay_inside() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pi = vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 0.5]];
        let pts = sample_interior(&pi, 3, &mut rng, 200).unwrap();
        let r = Region { id: 0, pi: pi.clone(), provenance: vec![] };
        for p in pts {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|x| *x > 0.0));
            assert!(r.contains(&p));
        }
    }
}
