//! Diagonal clustering Hamiltonians and interpolated adiabatic evolution.
//!
//! Evolution is piecewise constant: step `i` applies the exact propagator of
//! `H(s_i) = (1 - s_i) H0 + s_i Hf` for `tau / S`, with `s_i` taken at the
//! step midpoint.
//!
//! When `H0 = 1 - |r><r|` and `Hf` is diagonal the run never builds a dense
//! matrix. Group the basis states by equal `Hf` entries and let `e_g` be the
//! normalized restriction of `r` to group `g`. Both terms leave
//! `span{e_g}` invariant, and on it `H(s)` is the real `G x G` matrix
//! `diag((1-s) + s d_g) - (1-s) w w^T` with `w_g = |P_g r|`. Everything
//! orthogonal to that span only picks up a phase. Gaps are reported inside
//! this dynamical sector because the full-space gap closes at `s = 1`
//! whenever the optimum is degenerate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classical::{coincident_pairs, pairwise_sum, ENUMERATION_BUDGET};
use crate::distance::{distance_to_centroid, EstimatorOptions, Mode};
use crate::error::{Error, Result};
use crate::operator::{real_symmetric_eigen, sorted_symmetric_eigen, HermitianOperator, Representation, DENSE_DIM_CAP};
use crate::rng::SimRng;
use crate::state_prep::{DataSet, QueryLedger};
use crate::statevector::{Layout, StateVector, C64};

/// Register name prefix for tuple registers: `slot0`, `slot1`, ...
pub const SLOT_PREFIX: &str = "slot";
const START_TOLERANCE: f64 = 1e-10;
const GROUP_TOLERANCE: f64 = 1e-12;
const DEGENERACY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DistanceSource {
    Exact,
    QuantumEstimated { mode: Mode, shots: u64 },
}

/// Symmetric matrix of squared pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    m: usize,
    entries: Vec<f64>,
    source: DistanceSource,
}

impl DistanceMatrix {
    pub fn from_data(data: &DataSet) -> Result<Self> {
        let m = data.len();
        let mut entries = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let d = crate::classical::exact_distance(data.vector(a)?, data.vector(b)?)?;
                entries[a * m + b] = d;
                entries[b * m + a] = d;
            }
        }
        Ok(Self {
            m,
            entries,
            source: DistanceSource::Exact,
        })
    }

    /// Row-major entries. Must be symmetric, non-negative, zero on the diagonal.
    pub fn from_entries(m: usize, entries: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroDimension("distance matrix".into()));
        }
        if entries.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: entries.len(),
            });
        }
        for a in 0..m {
            if entries[a * m + a] != 0.0 {
                return Err(Error::InvalidInput(format!("D[{a}][{a}] must be zero")));
            }
            for b in 0..m {
                let x = entries[a * m + b];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::InvalidInput(format!("D[{a}][{b}] = {x} is not a non-negative number")));
                }
                if x != entries[b * m + a] {
                    return Err(Error::InvalidInput(format!("D is not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self {
            m,
            entries,
            source: DistanceSource::Exact,
        })
    }

    /// Pairwise distances from the swap-test estimator, one estimate per
    /// unordered pair, mirrored.
    pub fn estimated(data: &DataSet, opts: &EstimatorOptions, ledger: &QueryLedger, rng: &mut SimRng) -> Result<Self> {
        let m = data.len();
        let mut entries = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let est = distance_to_centroid(data.vector(a)?, data, &[b], opts, ledger, rng)?;
                let d = est.value.max(0.0);
                entries[a * m + b] = d;
                entries[b * m + a] = d;
            }
        }
        Ok(Self {
            m,
            entries,
            source: DistanceSource::QuantumEstimated {
                mode: opts.mode,
                shots: opts.shots,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.m + b]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn source(&self) -> DistanceSource {
        self.source
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

fn tuple_layout(m: usize, len: usize) -> Result<Layout> {
    let size = (m as f64).powi(len as i32);
    if size > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            size,
            budget: ENUMERATION_BUDGET,
        });
    }
    Layout::uniform(SLOT_PREFIX, len, m)
}

fn tuple_diagonal(m: usize, len: usize, f: impl Fn(&[usize]) -> f64) -> Result<HermitianOperator> {
    let layout = tuple_layout(m, len)?;
    let entries = (0..layout.dim()).map(|x| f(&layout.digits(x))).collect();
    HermitianOperator::diagonal(layout, entries)
}

/// Diagonal operator on `k` tuple registers whose entry at `(j_1..j_k)` is
/// minus the pairwise distance sum over ordered position pairs.
pub fn build_seed_hamiltonian(d: &DistanceMatrix, k: usize) -> Result<HermitianOperator> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > d.len() {
        return Err(Error::InvalidInput(format!("k = {k} exceeds M = {}", d.len())));
    }
    tuple_diagonal(d.len(), k, |t| -pairwise_sum(d, t))
}

/// Diagonal operator on `r` tuple registers: pairwise distance sum plus
/// `kappa` for every ordered pair of positions (including a position with
/// itself) holding the same label.
pub fn build_clusterfind_hamiltonian(d: &DistanceMatrix, r: usize, kappa: f64) -> Result<HermitianOperator> {
    if r < 2 {
        return Err(Error::InvalidInput("r must be at least 2".into()));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidInput(format!("kappa = {kappa} must be a non-negative number")));
    }
    tuple_diagonal(d.len(), r, |t| pairwise_sum(d, t) + kappa * coincident_pairs(t) as f64)
}

/// Warning text when no all-distinct `r`-tuple exists.
pub fn clusterfind_warning(m: usize, r: usize) -> Option<String> {
    (r > m).then(|| format!("r = {r} exceeds M = {m}; every tuple repeats a label"))
}

pub fn default_kappa(d: &DistanceMatrix) -> f64 {
    10.0 * d.max()
}

/// Product of uniform superpositions over `k` registers of dimension `m`.
pub fn uniform_start(k: usize, m: usize) -> Result<StateVector> {
    Ok(StateVector::uniform(Layout::uniform(SLOT_PREFIX, k, m)?))
}

/// `1 - |psi><psi|`.
pub fn projector_h0(psi: &StateVector) -> HermitianOperator {
    HermitianOperator::complement_projector(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    /// `3x^2 - 2x^3`
    Smoothstep,
    /// `6x^5 - 15x^4 + 10x^3`
    Smootherstep,
}

impl Interpolation {
    pub fn eval(self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Interpolation::Linear => x,
            Interpolation::Smoothstep => x * x * (3.0 - 2.0 * x),
            Interpolation::Smootherstep => x * x * x * (x * (6.0 * x - 15.0) + 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_time: f64,
    pub steps: usize,
    pub interpolation: Interpolation,
}

impl Schedule {
    pub fn new(total_time: f64, steps: usize) -> Result<Self> {
        Self::with_interpolation(total_time, steps, Interpolation::Linear)
    }

    pub fn with_interpolation(total_time: f64, steps: usize, interpolation: Interpolation) -> Result<Self> {
        if !total_time.is_finite() || total_time <= 0.0 {
            return Err(Error::InvalidInput(format!("tau = {total_time} must be positive")));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        Ok(Self {
            total_time,
            steps,
            interpolation,
        })
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.steps as f64
    }

    /// Interpolation parameter at elapsed time `t`.
    pub fn s_at(&self, t: f64) -> f64 {
        self.interpolation.eval(t / self.total_time)
    }

    /// Midpoint parameter of step `i`.
    pub fn step_s(&self, i: usize) -> f64 {
        self.interpolation.eval((i as f64 + 0.5) / self.steps as f64)
    }
}

/// Energy unit applied to a diagonal final Hamiltonian before annealing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Entries span `[0, 1]`.
    #[default]
    UnitSpread,
    /// The lowest excitation above the minimum entry is 1.
    UnitGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticProblem {
    h0: HermitianOperator,
    hf: HermitianOperator,
    start: StateVector,
}

impl AdiabaticProblem {
    /// `start` must be annihilated by `h0`.
    pub fn new(h0: HermitianOperator, hf: HermitianOperator, start: StateVector) -> Result<Self> {
        if h0.layout() != hf.layout() || h0.layout() != start.layout() {
            return Err(Error::LayoutMismatch("h0, hf and start must share a layout".into()));
        }
        let residual = h0.apply(start.amplitudes()).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if residual > START_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "start state is not annihilated by h0 (|h0 start| = {residual:e})"
            )));
        }
        Ok(Self { h0, hf, start })
    }

    /// Projector problem: `H0 = 1 - |start><start|`.
    pub fn from_start(start: StateVector, hf: HermitianOperator) -> Result<Self> {
        Self::new(projector_h0(&start), hf, start)
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn hf(&self) -> &HermitianOperator {
        &self.hf
    }

    pub fn start(&self) -> &StateVector {
        &self.start
    }

    /// Affinely rescale a diagonal `hf` so its smallest entry is zero.
    /// Eigenvectors and their order are unchanged; only the energy scale
    /// relative to `h0` moves. Constant diagonals become zero.
    pub fn normalized(&self, normalization: Normalization) -> Result<Self> {
        let Some(d) = self.hf.diagonal_entries() else {
            return Ok(self.clone());
        };
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let unit = match normalization {
            Normalization::UnitSpread => d.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo,
            Normalization::UnitGap => {
                let tol = GROUP_TOLERANCE * lo.abs().max(1.0);
                d.iter().copied().filter(|x| x - lo > tol).fold(f64::INFINITY, f64::min) - lo
            }
        };
        let entries = d
            .iter()
            .map(|x| if unit > 0.0 && unit.is_finite() { (x - lo) / unit } else { 0.0 })
            .collect();
        Ok(Self {
            h0: self.h0.clone(),
            hf: HermitianOperator::diagonal(self.hf.layout().clone(), entries)?,
            start: self.start.clone(),
        })
    }

    /// `H(s)` as an operator, for inspection and oracles.
    pub fn hamiltonian(&self, s: f64) -> Result<HermitianOperator> {
        HermitianOperator::interpolate(&self.h0, &self.hf, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSample {
    pub s: f64,
    pub gap: f64,
    pub ground_overlap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GapTrace {
    pub samples: Vec<GapSample>,
}

impl GapTrace {
    /// Sample with the smallest gap, first one on ties.
    pub fn min_sample(&self) -> Option<GapSample> {
        self.samples
            .iter()
            .copied()
            .reduce(|best, x| if x.gap < best.gap { x } else { best })
    }

    pub fn min_gap(&self) -> f64 {
        self.min_sample().map_or(0.0, |x| x.gap)
    }

    pub fn final_overlap(&self) -> f64 {
        self.samples.last().map_or(0.0, |x| x.ground_overlap)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,gap,ground_overlap\n");
        for x in &self.samples {
            let _ = writeln!(out, "{},{},{}", x.s, x.gap, x.ground_overlap);
        }
        out
    }
}

/// Evolve `problem.start()` along the schedule. The trace holds one sample
/// at `s = 0`, one after every step (at that step's `s`), and one at `s = 1`
/// for the final state.
pub fn run_adiabatic(problem: &AdiabaticProblem, schedule: &Schedule) -> Result<(StateVector, GapTrace)> {
    let dim = problem.start.dim();
    if dim > DENSE_DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: DENSE_DIM_CAP });
    }
    match (problem.h0.representation(), problem.hf.representation()) {
        (Representation::ComplementProjector(r), Representation::Diagonal(d)) => {
            SectorRun::new(r, d, problem.start.amplitudes()).run(problem.start.layout(), schedule)
        }
        _ => dense_run(problem, schedule),
    }
}

/// Groups of basis indices sharing one `Hf` entry.
fn energy_groups(d: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for x in order {
        match groups.last_mut() {
            Some((e, members)) if (d[x] - *e).abs() <= GROUP_TOLERANCE * e.abs().max(1.0) => members.push(x),
            _ => groups.push((d[x], vec![x])),
        }
    }
    groups
}

struct SectorRun {
    dim: usize,
    /// Energy of each group and its members.
    groups: Vec<(f64, Vec<usize>)>,
    /// Indices into `groups` that carry weight of the reference vector.
    sector: Vec<usize>,
    w: Vec<f64>,
    /// `e_g` restricted to its group, aligned with `groups[sector[i]].1`.
    basis: Vec<Vec<C64>>,
    coeffs: Vec<C64>,
    residual: Vec<C64>,
}

impl SectorRun {
    fn new(r: &[C64], d: &[f64], start: &[C64]) -> Self {
        let groups = energy_groups(d);
        let mut sector = Vec::new();
        let mut w = Vec::new();
        let mut basis = Vec::new();
        for (g, (_, members)) in groups.iter().enumerate() {
            let weight = members.iter().map(|&x| r[x].norm_sqr()).sum::<f64>().sqrt();
            if weight > 0.0 {
                sector.push(g);
                w.push(weight);
                basis.push(members.iter().map(|&x| r[x] / weight).collect());
            }
        }
        let mut run = Self {
            dim: d.len(),
            groups,
            sector,
            w,
            basis,
            coeffs: Vec::new(),
            residual: start.to_vec(),
        };
        run.coeffs = run.split_off_sector();
        run
    }

    /// Move the sector component of `residual` into coefficients.
    fn split_off_sector(&mut self) -> Vec<C64> {
        let mut coeffs = Vec::with_capacity(self.sector.len());
        for (i, &g) in self.sector.iter().enumerate() {
            let members = &self.groups[g].1;
            let e = &self.basis[i];
            let c: C64 = members.iter().zip(e).map(|(&x, ex)| ex.conj() * self.residual[x]).sum();
            for (&x, ex) in members.iter().zip(e) {
                self.residual[x] -= c * ex;
            }
            coeffs.push(c);
        }
        coeffs
    }

    fn reduced(&self, s: f64) -> DMatrix<f64> {
        let n = self.sector.len();
        DMatrix::from_fn(n, n, |a, b| {
            let diag = if a == b {
                (1.0 - s) + s * self.groups[self.sector[a]].0
            } else {
                0.0
            };
            diag - (1.0 - s) * self.w[a] * self.w[b]
        })
    }

    /// Sector spectrum, sector ground vector and the gap to report.
    fn spectrum(&self, s: f64) -> (Vec<f64>, DMatrix<f64>, f64) {
        let (values, vectors) = real_symmetric_eigen(&self.reduced(s));
        let n = values.len();
        let gap = if n >= 2 {
            values[1] - values[0]
        } else {
            self.full_gap(s, values.first().copied())
        };
        (values, vectors, gap)
    }

    /// Full-space gap from the sector eigenvalue plus the group levels
    /// orthogonal to it.
    fn full_gap(&self, s: f64, sector_value: Option<f64>) -> f64 {
        let mut levels: Vec<f64> = sector_value.into_iter().collect();
        for (g, (e, members)) in self.groups.iter().enumerate() {
            let extra = members.len() - usize::from(self.sector.contains(&g));
            let level = (1.0 - s) + s * e;
            levels.extend(std::iter::repeat(level).take(extra.min(2)));
        }
        levels.sort_by(f64::total_cmp);
        if levels.len() < 2 {
            0.0
        } else {
            levels[1] - levels[0]
        }
    }

    fn ground_overlap(&self, vectors: &DMatrix<f64>) -> f64 {
        if vectors.ncols() == 0 {
            return 0.0;
        }
        let amp: C64 = self.coeffs.iter().enumerate().map(|(i, c)| c * vectors[(i, 0)]).sum();
        amp.norm_sqr()
    }

    fn sample(&self, s: f64) -> GapSample {
        let (_, vectors, gap) = self.spectrum(s);
        GapSample {
            s,
            gap,
            ground_overlap: self.ground_overlap(&vectors),
        }
    }

    fn step(&mut self, s: f64, dt: f64) -> GapSample {
        let (values, vectors, gap) = self.spectrum(s);
        let n = values.len();
        let c = DVector::from_column_slice(&self.coeffs);
        let v = vectors.map(|x| C64::new(x, 0.0));
        let mut rotated = v.transpose() * c;
        for (x, e) in rotated.iter_mut().zip(&values) {
            *x *= C64::from_polar(1.0, -e * dt);
        }
        let updated = v * rotated;
        self.coeffs = updated.iter().copied().collect();
        debug_assert_eq!(self.coeffs.len(), n);
        for (e, members) in &self.groups {
            let phase = C64::from_polar(1.0, -((1.0 - s) + s * e) * dt);
            for &x in members {
                self.residual[x] *= phase;
            }
        }
        GapSample {
            s,
            gap,
            ground_overlap: self.ground_overlap(&vectors),
        }
    }

    fn state(&self) -> Vec<C64> {
        let mut out = self.residual.clone();
        for (i, &g) in self.sector.iter().enumerate() {
            for (&x, ex) in self.groups[g].1.iter().zip(&self.basis[i]) {
                out[x] += self.coeffs[i] * ex;
            }
        }
        debug_assert_eq!(out.len(), self.dim);
        out
    }

    fn run(mut self, layout: &Layout, schedule: &Schedule) -> Result<(StateVector, GapTrace)> {
        let dt = schedule.dt();
        let mut samples = Vec::with_capacity(schedule.steps + 2);
        samples.push(self.sample(0.0));
        for i in 0..schedule.steps {
            samples.push(self.step(schedule.step_s(i), dt));
        }
        samples.push(self.sample(1.0));
        let state = StateVector::from_unnormalized(layout.clone(), self.state())?;
        Ok((state, GapTrace { samples }))
    }
}

fn dense_sample(h: DMatrix<C64>, state: &[C64], s: f64) -> (GapSample, crate::operator::Spectrum) {
    let spec = sorted_symmetric_eigen(h);
    let e0 = spec.values[0];
    let tol = DEGENERACY_TOLERANCE * e0.abs().max(1.0);
    let mut overlap = 0.0;
    for (i, e) in spec.values.iter().enumerate() {
        if e - e0 > tol {
            break;
        }
        let amp: C64 = spec.vectors.column(i).iter().zip(state).map(|(v, x)| v.conj() * x).sum();
        overlap += amp.norm_sqr();
    }
    let sample = GapSample {
        s,
        gap: spec.gap(),
        ground_overlap: overlap,
    };
    (sample, spec)
}

fn dense_run(problem: &AdiabaticProblem, schedule: &Schedule) -> Result<(StateVector, GapTrace)> {
    let a = problem.h0.to_dense()?;
    let b = problem.hf.to_dense()?;
    let h = |s: f64| &a * C64::new(1.0 - s, 0.0) + &b * C64::new(s, 0.0);
    let dt = schedule.dt();
    let mut state = DVector::from_column_slice(problem.start.amplitudes());
    let mut samples = Vec::with_capacity(schedule.steps + 2);
    samples.push(dense_sample(h(0.0), state.as_slice(), 0.0).0);
    for i in 0..schedule.steps {
        let s = schedule.step_s(i);
        let (_, spec) = dense_sample(h(s), state.as_slice(), s);
        let n = spec.values.len();
        let phases = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::from_polar(1.0, -spec.values[r] * dt)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        state = &spec.vectors * (phases * (spec.vectors.adjoint() * state));
        samples.push(dense_sample(h(s), state.as_slice(), s).0);
    }
    samples.push(dense_sample(h(1.0), state.as_slice(), 1.0).0);
    let out = StateVector::from_unnormalized(problem.start.layout().clone(), state.iter().copied().collect())?;
    Ok((out, GapTrace { samples }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedTuple {
    pub tuple: Vec<usize>,
    pub count: u64,
    pub frequency: f64,
}

/// Measure every register `shots` times; outcomes ranked by count, ties in
/// lexicographic tuple order.
pub fn sample_solution(state: &StateVector, shots: u64, rng: &mut SimRng) -> Result<Vec<RankedTuple>> {
    let names: Vec<&str> = state.layout().registers().iter().map(|r| r.name()).collect();
    let hist = state.sample(&names, shots, rng)?;
    let mut ranked: Vec<RankedTuple> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(x, &count)| RankedTuple {
            tuple: state.layout().digits(x),
            count,
            frequency: count as f64 / shots as f64,
        })
        .collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.tuple.cmp(&b.tuple)));
    Ok(ranked)
}

/// Merge tuples that are permutations of each other; each orbit is keyed by
/// its sorted tuple.
pub fn collapse_orbits(ranked: &[RankedTuple]) -> Vec<RankedTuple> {
    let mut merged: BTreeMap<Vec<usize>, (u64, f64)> = BTreeMap::new();
    for x in ranked {
        let mut key = x.tuple.clone();
        key.sort_unstable();
        let slot = merged.entry(key).or_insert((0, 0.0));
        slot.0 += x.count;
        slot.1 += x.frequency;
    }
    let mut out: Vec<RankedTuple> = merged
        .into_iter()
        .map(|(tuple, (count, frequency))| RankedTuple { tuple, count, frequency })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.tuple.cmp(&b.tuple)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::brute_force_seed_set;
    use rand::Rng;

    fn two_point(d01: f64) -> DistanceMatrix {
        DistanceMatrix::from_entries(2, vec![0.0, d01, d01, 0.0]).unwrap()
    }

    fn random_matrix(m: usize, rng: &mut SimRng) -> DistanceMatrix {
        let pts: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        DistanceMatrix::from_data(&DataSet::from_real_rows(pts).unwrap()).unwrap()
    }

    #[test]
    fn normalizations_rescale_diagonal() {
        let psi = uniform_start(1, 4).unwrap();
        let hf = HermitianOperator::diagonal(psi.layout().clone(), vec![-3.0, -3.0, -2.5, 1.0]).unwrap();
        let p = AdiabaticProblem::from_start(psi.clone(), hf).unwrap();
        let spread = p.normalized(Normalization::UnitSpread).unwrap();
        assert_eq!(spread.hf().diagonal_entries().unwrap(), &[0.0, 0.0, 0.125, 1.0]);
        let gap = p.normalized(Normalization::UnitGap).unwrap();
        assert_eq!(gap.hf().diagonal_entries().unwrap(), &[0.0, 0.0, 1.0, 8.0]);

        let flat = HermitianOperator::diagonal(psi.layout().clone(), vec![2.0; 4]).unwrap();
        let p = AdiabaticProblem::from_start(psi, flat).unwrap();
        for n in [Normalization::UnitSpread, Normalization::UnitGap] {
            assert_eq!(p.normalized(n).unwrap().hf().diagonal_entries().unwrap(), &[0.0; 4]);
        }
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::from_entries(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::from_entries(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::from_entries(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        let d = DistanceMatrix::from_data(&DataSet::from_real_rows(vec![vec![0.0, 1.0], vec![3.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(d.get(0, 1), 9.0);
        assert_eq!(d.source(), DistanceSource::Exact);
    }

    #[test]
    fn seed_hamiltonian_examples() {
        let d = two_point(4.0);
        let h = build_seed_hamiltonian(&d, 1).unwrap();
        assert!(h.diagonal_entries().unwrap().iter().all(|x| *x == 0.0));
        let h = build_seed_hamiltonian(&d, 2).unwrap();
        assert_eq!(h.diagonal_entries().unwrap(), &[0.0, -8.0, -8.0, 0.0]);
        assert!(build_seed_hamiltonian(&d, 3).is_err());
    }

    #[test]
    fn seed_hamiltonian_argmin_is_brute_force_argmax() {
        let mut rng = SimRng::new(5);
        for _ in 0..10 {
            let d = random_matrix(4, &mut rng);
            let h = build_seed_hamiltonian(&d, 2).unwrap();
            let diag = h.diagonal_entries().unwrap();
            let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
            let argmins: Vec<Vec<usize>> = (0..diag.len())
                .filter(|&x| diag[x] == min)
                .map(|x| h.layout().digits(x))
                .collect();
            let best = brute_force_seed_set(&d, 2).unwrap();
            assert_eq!(argmins, best.tuples);
            assert_eq!(-min, best.value);
        }
    }

    #[test]
    fn clusterfind_examples() {
        let h = build_clusterfind_hamiltonian(&two_point(4.0), 2, 100.0).unwrap();
        assert_eq!(h.diagonal_entries().unwrap(), &[400.0, 208.0, 208.0, 400.0]);
        let zero = DistanceMatrix::from_entries(3, vec![0.0; 9]).unwrap();
        let h = build_clusterfind_hamiltonian(&zero, 2, 0.0).unwrap();
        assert!(h.diagonal_entries().unwrap().iter().all(|x| *x == 0.0));
        assert!(build_clusterfind_hamiltonian(&zero, 1, 1.0).is_err());
        assert!(build_clusterfind_hamiltonian(&zero, 2, -1.0).is_err());
        assert!(clusterfind_warning(3, 4).is_some());
        assert!(clusterfind_warning(3, 3).is_none());
    }

    #[test]
    fn uniform_start_amplitudes() {
        let s = uniform_start(1, 2).unwrap();
        assert!(s.amplitudes().iter().all(|a| (a.re - 0.5f64.sqrt()).abs() < 1e-15));
        let s = uniform_start(3, 4).unwrap();
        assert_eq!(s.dim(), 64);
        assert!(s.amplitudes().iter().all(|a| (a.re - 0.125).abs() < 1e-15));
    }

    #[test]
    fn projector_h0_properties() {
        let psi = uniform_start(2, 3).unwrap();
        let h0 = projector_h0(&psi);
        let hv = h0.apply(psi.amplitudes());
        assert!(hv.iter().all(|x| x.norm() < 1e-15));
        let m = h0.to_dense().unwrap();
        assert!((m.trace().re - 8.0).abs() < 1e-12);
        let mut other = vec![C64::new(0.0, 0.0); 9];
        other[0] = C64::new(1.0, 0.0);
        other[1] = C64::new(-1.0, 0.0);
        let hv = h0.apply(&other);
        assert!(hv.iter().zip(&other).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn schedule_endpoints() {
        for f in [Interpolation::Linear, Interpolation::Smoothstep, Interpolation::Smootherstep] {
            assert_eq!(f.eval(0.0), 0.0);
            assert_eq!(f.eval(1.0), 1.0);
            let xs: Vec<f64> = (0..=100).map(|i| f.eval(i as f64 / 100.0)).collect();
            assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        }
        assert!(Schedule::new(0.0, 10).is_err());
        assert!(Schedule::new(1.0, 0).is_err());
        let psi = uniform_start(1, 3).unwrap();
        let hf = HermitianOperator::diagonal(psi.layout().clone(), vec![1.0, 2.0, 3.0]).unwrap();
        let p = AdiabaticProblem::from_start(psi, hf.clone()).unwrap();
        assert_eq!(p.hamiltonian(0.0).unwrap().to_dense().unwrap(), p.h0().to_dense().unwrap());
        assert_eq!(p.hamiltonian(1.0).unwrap().to_dense().unwrap(), hf.to_dense().unwrap());
    }

    #[test]
    fn start_must_be_ground_state() {
        let psi = uniform_start(1, 2).unwrap();
        let other = StateVector::basis(psi.layout().clone(), 0).unwrap();
        let hf = HermitianOperator::diagonal(psi.layout().clone(), vec![0.0, 1.0]).unwrap();
        assert!(AdiabaticProblem::new(projector_h0(&psi), hf, other).is_err());
    }

    #[test]
    fn no_deformation_keeps_start() {
        let psi = uniform_start(2, 2).unwrap();
        let h0 = projector_h0(&psi);
        let p = AdiabaticProblem::new(h0.clone(), h0, psi.clone()).unwrap();
        let (out, trace) = run_adiabatic(&p, &Schedule::new(20.0, 50).unwrap()).unwrap();
        assert!(out.fidelity(&psi).unwrap() > 1.0 - 1e-10);
        assert!(trace.samples.iter().all(|x| x.gap >= -1e-10));
    }

    /// Time-ordered product of exact step propagators built independently
    /// from dense eigensolves of `H(s)`.
    fn reference_evolution(p: &AdiabaticProblem, sch: &Schedule) -> Vec<C64> {
        let mut v = DVector::from_column_slice(p.start().amplitudes());
        for i in 0..sch.steps {
            let h = p.hamiltonian(sch.step_s(i)).unwrap().to_dense().unwrap();
            let spec = sorted_symmetric_eigen(h);
            let n = spec.values.len();
            let ph = DMatrix::from_fn(n, n, |r, c| {
                if r == c { C64::from_polar(1.0, -spec.values[r] * sch.dt()) } else { C64::new(0.0, 0.0) }
            });
            v = &spec.vectors * ph * spec.vectors.adjoint() * v;
        }
        v.iter().copied().collect()
    }

    #[test]
    fn landau_zener_two_level() {
        let psi = uniform_start(1, 2).unwrap();
        let hf = HermitianOperator::diagonal(psi.layout().clone(), vec![0.0, -1.0]).unwrap();
        let p = AdiabaticProblem::from_start(psi, hf).unwrap();
        let sch = Schedule::new(200.0, 2000).unwrap();
        let (out, trace) = run_adiabatic(&p, &sch).unwrap();
        assert!(out.probabilities()[1] > 0.99);
        assert!(trace.final_overlap() > 0.99);
        let want = reference_evolution(&p, &sch);
        let diff: f64 = out.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(diff.sqrt() < 1e-9);
    }

    #[test]
    fn sector_run_matches_dense_reference() {
        let mut rng = SimRng::new(21);
        let d = random_matrix(3, &mut rng);
        let psi = uniform_start(2, 3).unwrap();
        let p = AdiabaticProblem::from_start(psi, build_seed_hamiltonian(&d, 2).unwrap())
            .unwrap()
            .normalized(Normalization::UnitSpread)
            .unwrap();
        let sch = Schedule::new(15.0, 60).unwrap();
        let (out, _) = run_adiabatic(&p, &sch).unwrap();
        let want = reference_evolution(&p, &sch);
        let diff: f64 = out.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(diff.sqrt() < 1e-9);

        let dense = AdiabaticProblem::new(
            HermitianOperator::dense(p.h0().layout().clone(), p.h0().to_dense().unwrap()).unwrap(),
            p.hf().clone(),
            p.start().clone(),
        )
        .unwrap();
        let (out2, _) = run_adiabatic(&dense, &sch).unwrap();
        assert!(out.fidelity(&out2).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn gap_matches_independent_eigensolve() {
        let d = DistanceMatrix::from_data(
            &DataSet::from_real_rows(vec![vec![0.5, 0.5], vec![1.5, 0.5], vec![0.5, 2.0], vec![6.5, 5.5]]).unwrap(),
        )
        .unwrap();
        let psi = uniform_start(2, 4).unwrap();
        let p = AdiabaticProblem::from_start(psi.clone(), build_seed_hamiltonian(&d, 2).unwrap())
            .unwrap()
            .normalized(Normalization::UnitSpread)
            .unwrap();
        let (_, trace) = run_adiabatic(&p, &Schedule::new(200.0, 2000).unwrap()).unwrap();
        let min = trace.min_sample().unwrap();
        let (gap, _) = sector_gap_oracle(&p, min.s);
        assert!((gap - min.gap).abs() < 1e-8, "{gap} vs {}", min.gap);
    }

    /// Dense eigensolve of `H(s)`, keeping eigenvectors that mostly live in
    /// the span of the energy-group restrictions of the start state.
    fn sector_gap_oracle(p: &AdiabaticProblem, s: f64) -> (f64, usize) {
        let d = p.hf().diagonal_entries().unwrap();
        let start = p.start().amplitudes();
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (x, e) in d.iter().enumerate() {
            groups.entry(e.to_bits()).or_default().push(x);
        }
        let spans: Vec<Vec<(usize, C64)>> = groups
            .values()
            .map(|members| {
                let w = members.iter().map(|&x| start[x].norm_sqr()).sum::<f64>().sqrt();
                members.iter().map(|&x| (x, start[x] / w)).collect()
            })
            .collect();
        let spec = sorted_symmetric_eigen(p.hamiltonian(s).unwrap().to_dense().unwrap());
        let kept: Vec<f64> = (0..spec.values.len())
            .filter(|&i| {
                let col = spec.vector(i);
                let weight: f64 = spans
                    .iter()
                    .map(|e| e.iter().map(|(x, a)| a.conj() * col[*x]).sum::<C64>().norm_sqr())
                    .sum();
                weight > 0.5
            })
            .map(|i| spec.values[i])
            .collect();
        (kept[1] - kept[0], kept.len())
    }

    #[test]
    fn sampling_examples() {
        let layout = Layout::uniform(SLOT_PREFIX, 2, 3).unwrap();
        let basis = StateVector::basis(layout.clone(), layout.index_of(&[2, 0])).unwrap();
        let ranked = sample_solution(&basis, 100, &mut SimRng::new(1)).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].tuple, vec![2, 0]);
        assert_eq!(ranked[0].frequency, 1.0);

        let uniform = uniform_start(2, 3).unwrap();
        let shots = 100_000;
        let ranked = sample_solution(&uniform, shots, &mut SimRng::new(2)).unwrap();
        let p = 1.0 / 9.0;
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        assert!((ranked[0].frequency - p).abs() < 5.0 * sigma);
        assert!(ranked.windows(2).all(|w| w[0].count >= w[1].count));

        let orbits = collapse_orbits(&ranked);
        assert_eq!(orbits.len(), 6);
        assert_eq!(orbits.iter().map(|x| x.count).sum::<u64>(), shots);
    }

    #[test]
    fn gap_trace_csv() {
        let trace = GapTrace {
            samples: vec![GapSample { s: 0.0, gap: 1.0, ground_overlap: 1.0 }, GapSample { s: 0.5, gap: 0.25, ground_overlap: 0.9 }],
        };
        assert_eq!(trace.to_csv(), "s,gap,ground_overlap\n0,1,1\n0.5,0.25,0.9\n");
        assert_eq!(trace.min_gap(), 0.25);
    }
}
