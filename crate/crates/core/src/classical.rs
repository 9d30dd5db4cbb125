//! Classical reference algorithms: Lloyd's k-means, k-means++ seeding,
//! exhaustive tuple optimizers and dense ground-state solves.
//!
//! Ties break to the lowest index everywhere; the quantum pipeline decodes
//! with the same rule so the two never disagree on a tie.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use crate::adiabatic::DistanceMatrix;
use crate::error::{Error, Result};
use crate::operator::{HermitianOperator, Representation};
use crate::rng::SimRng;
use crate::state_prep::DataSet;
use crate::statevector::C64;

/// Upper bound on the number of tuples enumerated exhaustively.
pub const ENUMERATION_BUDGET: f64 = 1e7;
const DEGENERACY_TOLERANCE: f64 = 1e-10;

/// Squared Euclidean distance.
pub fn exact_distance(u: &[C64], v: &[C64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(u.iter().zip(v).map(|(a, b)| (a - b).norm_sqr()).sum())
}

pub fn mean_vector(data: &DataSet, members: &[usize]) -> Result<Vec<C64>> {
    data.check_subset(members)?;
    let mut acc = vec![C64::new(0.0, 0.0); data.dim()];
    for &j in members {
        for (a, x) in acc.iter_mut().zip(data.vector(j)?) {
            *a += x;
        }
    }
    let n = members.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `rows[j][c] = |v_j - centroid_c|^2`.
pub fn distance_table(data: &DataSet, centroids: &[Vec<C64>]) -> Result<Vec<Vec<f64>>> {
    data.vectors()
        .map(|v| centroids.iter().map(|c| exact_distance(v, c)).collect())
        .collect()
}

pub fn assign_to_centroids(data: &DataSet, centroids: &[Vec<C64>]) -> Result<Vec<usize>> {
    Ok(distance_table(data, centroids)?.iter().map(|r| argmin(r)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentroidUpdate {
    pub centroids: Vec<Vec<C64>>,
    /// `(cluster, label)` pairs for clusters that were empty and re-seeded.
    pub reseeded: Vec<(usize, usize)>,
}

/// Means of the assigned vectors. An empty cluster is re-seeded with the
/// label whose squared distance to the nearest existing centroid is
/// largest.
pub fn update_centroids(data: &DataSet, labels: &[usize], k: usize) -> Result<CentroidUpdate> {
    let mut members = vec![Vec::new(); k];
    for (j, &c) in labels.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidInput(format!("cluster index {c} out of range for k = {k}")));
        }
        members[c].push(j);
    }
    let mut centroids: Vec<Option<Vec<C64>>> = members
        .iter()
        .map(|m| if m.is_empty() { Ok(None) } else { mean_vector(data, m).map(Some) })
        .collect::<Result<_>>()?;
    let mut reseeded = Vec::new();
    for c in 0..k {
        if centroids[c].is_some() {
            continue;
        }
        let existing: Vec<&Vec<C64>> = centroids.iter().flatten().collect();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, v) in data.vectors().enumerate() {
            let d = existing
                .iter()
                .map(|e| exact_distance(v, e))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (j, d);
            }
        }
        centroids[c] = Some(data.vector(best.0)?.to_vec());
        reseeded.push((c, best.0));
    }
    Ok(CentroidUpdate {
        centroids: centroids.into_iter().map(|c| c.expect("filled")).collect(),
        reseeded,
    })
}

/// Within-cluster sum of squares.
pub fn wcss(data: &DataSet, labels: &[usize], centroids: &[Vec<C64>]) -> Result<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(j, &c)| exact_distance(data.vector(j)?, &centroids[c]))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<C64>>,
    pub wcss: f64,
}

impl Assignment {
    pub fn from_labels(data: &DataSet, labels: Vec<usize>, k: usize) -> Result<Self> {
        let update = update_centroids(data, &labels, k)?;
        let wcss = wcss(data, &labels, &update.centroids)?;
        Ok(Self {
            labels,
            centroids: update.centroids,
            wcss,
        })
    }

    pub fn sizes(&self, k: usize) -> Vec<usize> {
        let mut s = vec![0; k];
        for &c in &self.labels {
            s[c] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LloydRun {
    pub assignment: Assignment,
    /// Assignment produced by every assignment step, first one against the seeds.
    pub history: Vec<Vec<usize>>,
    /// WCSS of each history entry about its own cluster means.
    pub wcss_history: Vec<f64>,
    pub converged: bool,
    pub reseeded: Vec<(usize, usize)>,
}

impl LloydRun {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

pub(crate) fn check_seeds(data: &DataSet, k: usize, seeds: &[usize]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > data.len() {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {} vectors", data.len())));
    }
    if seeds.len() != k {
        return Err(Error::InvalidInput(format!("expected {k} seeds, got {}", seeds.len())));
    }
    for (i, s) in seeds.iter().enumerate() {
        data.vector(*s)?;
        if seeds[..i].contains(s) {
            return Err(Error::InvalidInput(format!("seed label {s} is repeated")));
        }
    }
    Ok(())
}

/// Alternate nearest-centroid assignment and centroid update until the
/// assignment repeats or `max_iter` assignment steps have run.
pub fn kmeans_lloyd(data: &DataSet, k: usize, seeds: &[usize], max_iter: usize) -> Result<LloydRun> {
    check_seeds(data, k, seeds)?;
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let mut centroids = seeds
        .iter()
        .map(|&s| data.vector(s).map(<[C64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let mut history: Vec<Vec<usize>> = Vec::new();
    let mut wcss_history = Vec::new();
    let mut reseeded = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let labels = assign_to_centroids(data, &centroids)?;
        let update = update_centroids(data, &labels, k)?;
        wcss_history.push(wcss(data, &labels, &update.centroids)?);
        reseeded.extend(update.reseeded.iter().copied());
        let repeat = history.last() == Some(&labels);
        history.push(labels);
        centroids = update.centroids;
        if repeat {
            converged = true;
            break;
        }
    }
    let labels = history.last().cloned().expect("at least one iteration");
    let wcss = *wcss_history.last().expect("at least one iteration");
    Ok(LloydRun {
        assignment: Assignment {
            labels,
            centroids,
            wcss,
        },
        history,
        wcss_history,
        converged,
        reseeded,
    })
}

/// k-means++: first seed uniform, later seeds drawn with probability
/// proportional to the squared distance to the nearest chosen seed.
pub fn kmeanspp_seeds(data: &DataSet, k: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    if k == 0 || k > data.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must lie in 1..={}",
            data.len()
        )));
    }
    let m = data.len();
    let mut seeds = vec![rng.gen_range(0..m)];
    let mut nearest: Vec<f64> = data
        .vectors()
        .map(|v| exact_distance(v, data.vector(seeds[0]).expect("valid")))
        .collect::<Result<_>>()?;
    while seeds.len() < k {
        let next = if nearest.iter().any(|&d| d > 0.0) {
            WeightedIndex::new(&nearest)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .sample(rng)
        } else {
            // only duplicates left: pick uniformly among unchosen labels
            let free: Vec<usize> = (0..m).filter(|j| !seeds.contains(j)).collect();
            free[rng.gen_range(0..free.len())]
        };
        seeds.push(next);
        let chosen = data.vector(next)?;
        for (j, v) in data.vectors().enumerate() {
            nearest[j] = nearest[j].min(exact_distance(v, chosen)?);
        }
        nearest[next] = 0.0;
    }
    Ok(seeds)
}

/// Sum of `D[a][b]` over ordered pairs of tuple positions, summed in sorted
/// index order so permuted tuples give bit-identical results.
pub fn pairwise_sum(d: &DistanceMatrix, tuple: &[usize]) -> f64 {
    let mut sorted = tuple.to_vec();
    sorted.sort_unstable();
    let mut total = 0.0;
    for &a in &sorted {
        for &b in &sorted {
            total += d.get(a, b);
        }
    }
    total
}

/// Ordered position pairs `(l, l')`, including `l = l'`, holding equal labels.
pub fn coincident_pairs(tuple: &[usize]) -> usize {
    tuple
        .iter()
        .map(|a| tuple.iter().filter(|b| *b == a).count())
        .sum()
}

fn enumerate_tuples(m: usize, len: usize, mut visit: impl FnMut(&[usize])) -> Result<()> {
    let size = (m as f64).powi(len as i32);
    if size > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            size,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut tuple = vec![0usize; len];
    loop {
        visit(&tuple);
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < m {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TupleOptimum {
    pub value: f64,
    /// Every ordered tuple attaining `value`, in lexicographic order.
    pub tuples: Vec<Vec<usize>>,
}

fn optimize(m: usize, len: usize, better: impl Fn(f64, f64) -> bool, f: impl Fn(&[usize]) -> f64) -> Result<TupleOptimum> {
    let mut best: Option<TupleOptimum> = None;
    enumerate_tuples(m, len, |t| {
        let v = f(t);
        match &mut best {
            Some(b) if v == b.value => b.tuples.push(t.to_vec()),
            Some(b) if !better(v, b.value) => {}
            _ => {
                best = Some(TupleOptimum {
                    value: v,
                    tuples: vec![t.to_vec()],
                })
            }
        }
    })?;
    Ok(best.expect("at least one tuple"))
}

/// Exhaustive maximizer of the pairwise spread over ordered `k`-tuples.
pub fn brute_force_seed_set(d: &DistanceMatrix, k: usize) -> Result<TupleOptimum> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    optimize(d.len(), k, |a, b| a > b, |t| pairwise_sum(d, t))
}

/// Exhaustive minimizer of pairwise distance plus `kappa` per coincident
/// ordered pair, over ordered `r`-tuples.
pub fn brute_force_cluster_set(d: &DistanceMatrix, r: usize, kappa: f64) -> Result<TupleOptimum> {
    if r == 0 {
        return Err(Error::InvalidInput("r must be at least 1".into()));
    }
    optimize(d.len(), r, |a, b| a < b, |t| {
        pairwise_sum(d, t) + kappa * coincident_pairs(t) as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Orthonormal basis of the ground space.
    pub basis: Vec<Vec<C64>>,
}

impl GroundState {
    pub fn degeneracy(&self) -> usize {
        self.basis.len()
    }
}

/// Lowest eigenvalue and its eigenspace; levels within a relative 1e-10 of
/// the minimum count as degenerate.
pub fn exact_ground_state(h: &HermitianOperator) -> Result<GroundState> {
    if let Representation::ComplementProjector(r) = h.representation() {
        if h.dim() > 1 {
            return Ok(GroundState {
                energy: 0.0,
                basis: vec![r.clone()],
            });
        }
    }
    let spectrum = h.eigen()?;
    let e0 = spectrum.values[0];
    let tol = DEGENERACY_TOLERANCE * e0.abs().max(1.0);
    let basis = spectrum
        .values
        .iter()
        .enumerate()
        .take_while(|(_, e)| **e - e0 <= tol)
        .map(|(i, _)| spectrum.vector(i))
        .collect();
    Ok(GroundState { energy: e0, basis })
}
