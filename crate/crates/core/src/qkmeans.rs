//! Adiabatic Lloyd iteration over a clustering state on `cluster ⊗ label`.
//!
//! Every annealing step acts on the cluster register with the label
//! register as a spectator, and the final Hamiltonian is diagonal in both.
//! `H(s)` is therefore block diagonal in the label, and each label is
//! annealed as its own `k`-level problem before the blocks are reassembled
//! with weight `1/sqrt(M)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{run_adiabatic, AdiabaticProblem, GapSample, GapTrace, Interpolation, Normalization, Schedule};
use crate::classical::{argmin, check_seeds, distance_table, update_centroids, wcss};
use crate::distance::{swap_test, EstimatorOptions};
use crate::error::{Error, Result};
use crate::operator::{HermitianOperator, DENSE_DIM_CAP};
use crate::rng::SimRng;
use crate::state_prep::DataSet;
use crate::statevector::{Layout, Register, StateVector, Subsystem, C64};

pub const CLUSTER_REGISTER: &str = "cluster";
pub const LABEL_REGISTER: &str = "label";
pub const DEFAULT_FIDELITY_TOLERANCE: f64 = 1e-6;
/// States leaking at least this much carry no usable assignment.
pub const LEAKAGE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyBudget {
    pub d: usize,
    pub delta: f64,
}

impl Default for CopyBudget {
    fn default() -> Self {
        Self { d: 5, delta: 1e-2 }
    }
}

impl CopyBudget {
    pub fn new(d: usize, delta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("d must be at least 1".into()));
        }
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
        }
        Ok(Self { d, delta })
    }

    /// Copy reuse is only sound for `delta > d^(-2/3)`.
    pub fn usable(&self) -> bool {
        self.delta > (self.d as f64).powf(-2.0 / 3.0)
    }

    /// Allowed fidelity loss of the retained copies per evaluation.
    pub fn perturbation_bound(&self) -> f64 {
        (self.d as f64).powf(1.5) * self.delta * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidMode {
    /// Means of the decoded assignment.
    #[default]
    Exact,
    /// Exact means, with uniform noise in `[-delta, delta]` added to every
    /// label-to-centroid distance.
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QkmeansOptions {
    pub schedule: Schedule,
    pub normalization: Normalization,
    pub shots: u64,
    pub budget: CopyBudget,
    pub centroid_mode: CentroidMode,
    pub max_iter: usize,
    pub fidelity_tolerance: f64,
}

impl Default for QkmeansOptions {
    fn default() -> Self {
        Self {
            schedule: Schedule {
                total_time: 200.0,
                steps: 2000,
                interpolation: Interpolation::Smootherstep,
            },
            normalization: Normalization::UnitGap,
            shots: 10_000,
            budget: CopyBudget::default(),
            centroid_mode: CentroidMode::Exact,
            max_iter: 20,
            fidelity_tolerance: DEFAULT_FIDELITY_TOLERANCE,
        }
    }
}

fn clustering_layout(k: usize, m: usize) -> Result<Layout> {
    Layout::new(vec![Register::new(CLUSTER_REGISTER, k)?, Register::new(LABEL_REGISTER, m)?])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringState {
    state: StateVector,
    k: usize,
    m: usize,
    iteration: usize,
    leakage: f64,
    target: Vec<usize>,
}

impl ClusteringState {
    /// `(1/sqrt(M)) sum_j |c_j>|j>` for a definite assignment.
    pub fn from_assignment(assignment: &[usize], k: usize) -> Result<Self> {
        let m = assignment.len();
        let layout = clustering_layout(k, m)?;
        let mut amps = vec![C64::new(0.0, 0.0); k * m];
        for (j, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidLabel { label: c, count: k });
            }
            amps[c * m + j] = C64::new(1.0 / (m as f64).sqrt(), 0.0);
        }
        Ok(Self {
            state: StateVector::from_amplitudes(layout, amps)?,
            k,
            m,
            iteration: 0,
            leakage: 0.0,
            target: assignment.to_vec(),
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Probability outside the intended assignment `target()`.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Nearest-centroid assignment the annealing step aimed for.
    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn label_marginal(&self) -> Result<Vec<f64>> {
        self.state.marginal(&[LABEL_REGISTER])
    }

    /// Most likely cluster per label, read off the amplitudes.
    pub fn most_likely(&self) -> Vec<usize> {
        let p = self.state.probabilities();
        (0..self.m)
            .map(|j| {
                let col: Vec<f64> = (0..self.k).map(|c| -p[c * self.m + j]).collect();
                argmin(&col)
            })
            .collect()
    }
}

/// Output of one annealing pass over all labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealStep {
    pub state: ClusteringState,
    /// Label-combined trace: the gap is the smallest over labels and the
    /// ground overlap is the label average.
    pub trace: GapTrace,
    /// `(cluster, label)` pairs for clusters re-seeded before the step.
    pub reseeded: Vec<(usize, usize)>,
}

/// Anneal every label toward its nearest cluster under distance table
/// `table[j][c]`.
pub fn anneal_assignment(table: &[Vec<f64>], k: usize, opts: &QkmeansOptions, iteration: usize) -> Result<AnnealStep> {
    let m = table.len();
    if m == 0 {
        return Err(Error::EmptySubset);
    }
    let layout = clustering_layout(k, m)?;
    if layout.dim() > DENSE_DIM_CAP {
        return Err(Error::DimensionCap {
            dim: layout.dim(),
            cap: DENSE_DIM_CAP,
        });
    }
    let cluster = Layout::single(CLUSTER_REGISTER, k)?;
    let start = StateVector::uniform(cluster.clone());
    let weight = 1.0 / (m as f64).sqrt();
    let mut amps = vec![C64::new(0.0, 0.0); k * m];
    let mut target = Vec::with_capacity(m);
    let mut on_target = 0.0;
    let mut combined: Vec<GapSample> = Vec::new();
    for (j, row) in table.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.len(),
            });
        }
        let hf = HermitianOperator::diagonal(cluster.clone(), row.clone())?;
        let problem = AdiabaticProblem::from_start(start.clone(), hf)?.normalized(opts.normalization)?;
        let (out, trace) = run_adiabatic(&problem, &opts.schedule)?;
        let best = argmin(row);
        target.push(best);
        on_target += out.amplitudes()[best].norm_sqr();
        for (c, a) in out.amplitudes().iter().enumerate() {
            amps[c * m + j] = a * weight;
        }
        if combined.is_empty() {
            combined = trace.samples.iter().map(|x| GapSample { ground_overlap: 0.0, ..*x }).collect();
        }
        for (acc, x) in combined.iter_mut().zip(&trace.samples) {
            acc.gap = acc.gap.min(x.gap);
            acc.ground_overlap += x.ground_overlap / m as f64;
        }
    }
    let leakage = (1.0 - on_target / m as f64).clamp(0.0, 1.0);
    Ok(AnnealStep {
        state: ClusteringState {
            state: StateVector::from_unnormalized(layout, amps)?,
            k,
            m,
            iteration,
            leakage,
            target,
        },
        trace: GapTrace { samples: combined },
        reseeded: Vec::new(),
    })
}

/// First pass: every label against the seed vectors.
pub fn first_clustering(data: &DataSet, seeds: &[usize], opts: &QkmeansOptions) -> Result<AnnealStep> {
    check_seeds(data, seeds.len(), seeds)?;
    let centroids = seeds
        .iter()
        .map(|&s| data.vector(s).map(<[C64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    anneal_assignment(&distance_table(data, &centroids)?, seeds.len(), opts, 1)
}

/// Anneal against the means of a decoded assignment.
pub fn recluster_from_assignment(
    labels: &[usize],
    data: &DataSet,
    k: usize,
    opts: &QkmeansOptions,
    iteration: usize,
    rng: &mut SimRng,
) -> Result<AnnealStep> {
    let update = update_centroids(data, labels, k)?;
    let mut table = distance_table(data, &update.centroids)?;
    if opts.centroid_mode == CentroidMode::Noisy {
        let delta = opts.budget.delta;
        for x in table.iter_mut().flatten() {
            *x = (*x + rng.gen_range(-delta..=delta)).max(0.0);
        }
    }
    let mut step = anneal_assignment(&table, k, opts, iteration)?;
    step.reseeded = update.reseeded;
    Ok(step)
}

/// Decode `current` by sampling, then anneal against the resulting means.
pub fn recluster_step(current: &ClusteringState, data: &DataSet, opts: &QkmeansOptions, rng: &mut SimRng) -> Result<AnnealStep> {
    if current.leakage >= LEAKAGE_LIMIT {
        return Err(Error::Leakage(current.leakage));
    }
    if current.m != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: current.m,
        });
    }
    let labels = decode(current, opts.shots, rng)?;
    recluster_from_assignment(&labels, data, current.k, opts, current.iteration + 1, rng)
}

/// Majority cluster per label over `shots` joint samples; ties go to the
/// lowest cluster index.
pub fn decode(state: &ClusteringState, shots: u64, rng: &mut SimRng) -> Result<Vec<usize>> {
    let hist = state.state.sample(&[CLUSTER_REGISTER, LABEL_REGISTER], shots, rng)?;
    (0..state.m)
        .map(|j| {
            let counts: Vec<u64> = (0..state.k).map(|c| hist.counts[c * state.m + j]).collect();
            if counts.iter().all(|&n| n == 0) {
                return Err(Error::Unobserved(j));
            }
            let neg: Vec<f64> = counts.iter().map(|&n| -(n as f64)).collect();
            Ok(argmin(&neg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSizes {
    pub sizes: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub shots: u64,
}

/// `M_c = M * freq(c)` from cluster-register samples, with binomial errors.
pub fn estimate_cluster_sizes(state: &ClusteringState, shots: u64, rng: &mut SimRng) -> Result<ClusterSizes> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let hist = state.state.sample_register(CLUSTER_REGISTER, shots, rng)?;
    let m = state.m as f64;
    let (sizes, std_errors) = (0..state.k)
        .map(|c| {
            let f = hist.frequency(c);
            (m * f, m * (f * (1.0 - f) / shots as f64).sqrt())
        })
        .unzip();
    Ok(ClusterSizes {
        sizes,
        std_errors,
        shots,
    })
}

/// Swap-test fidelity between consecutive states and whether it clears
/// `1 - tolerance`.
pub fn convergence_check(prev: &ClusteringState, next: &ClusteringState, tolerance: f64) -> Result<(f64, bool)> {
    let test = swap_test(&prev.state, &next.state, &EstimatorOptions::default(), &mut SimRng::new(0))?;
    let fidelity = test.overlap.value;
    Ok((fidelity, fidelity >= 1.0 - tolerance))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<f64>,
    pub size_std_errors: Vec<f64>,
    /// Within-cluster sum of squares of the decoded assignment about its means.
    pub wcss: f64,
    pub leakage: f64,
    pub fidelity_with_previous: Option<f64>,
    pub min_gap: f64,
    pub reseeded: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkmeansRun {
    pub final_state: ClusteringState,
    pub history: Vec<IterationRecord>,
    pub traces: Vec<GapTrace>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QkmeansReport {
    pub iterations: usize,
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<f64>,
    pub wcss: f64,
    pub converged: bool,
    pub gap_min_per_iter: Vec<f64>,
}

impl QkmeansRun {
    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("a run has at least one iteration")
    }

    pub fn report(&self) -> QkmeansReport {
        let last = self.last();
        QkmeansReport {
            iterations: self.history.len(),
            assignments: last.assignments.clone(),
            cluster_sizes: last.cluster_sizes.clone(),
            wcss: last.wcss,
            converged: self.converged,
            gap_min_per_iter: self.history.iter().map(|r| r.min_gap).collect(),
        }
    }
}

fn record(
    step: &AnnealStep,
    labels: Vec<usize>,
    data: &DataSet,
    k: usize,
    fidelity: Option<f64>,
    opts: &QkmeansOptions,
    rng: &mut SimRng,
) -> Result<IterationRecord> {
    let sizes = estimate_cluster_sizes(&step.state, opts.shots, rng)?;
    let update = update_centroids(data, &labels, k)?;
    Ok(IterationRecord {
        iteration: step.state.iteration,
        wcss: wcss(data, &labels, &update.centroids)?,
        assignments: labels,
        cluster_sizes: sizes.sizes,
        size_std_errors: sizes.std_errors,
        leakage: step.state.leakage,
        fidelity_with_previous: fidelity,
        min_gap: step.trace.min_gap(),
        reseeded: step.reseeded.clone(),
    })
}

/// First clustering from `seeds`, then re-clustering until the swap-test
/// fidelity clears the tolerance or the decoded assignment repeats, or
/// `max_iter` annealing passes have run.
pub fn run_qkmeans(data: &DataSet, seeds: &[usize], opts: &QkmeansOptions, rng: &mut SimRng) -> Result<QkmeansRun> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let k = seeds.len();
    let step = first_clustering(data, seeds, opts)?;
    let mut labels = decode(&step.state, opts.shots, rng)?;
    let mut history = vec![record(&step, labels.clone(), data, k, None, opts, rng)?];
    let mut traces = vec![step.trace];
    let mut current = step.state;
    let mut converged = false;
    for iteration in 2..=opts.max_iter {
        if current.leakage >= LEAKAGE_LIMIT {
            return Err(Error::Leakage(current.leakage));
        }
        let step = recluster_from_assignment(&labels, data, k, opts, iteration, rng)?;
        let next_labels = decode(&step.state, opts.shots, rng)?;
        let (fidelity, close) = convergence_check(&current, &step.state, opts.fidelity_tolerance)?;
        converged = close || next_labels == labels;
        history.push(record(&step, next_labels.clone(), data, k, Some(fidelity), opts, rng)?);
        traces.push(step.trace);
        current = step.state;
        labels = next_labels;
        if converged {
            break;
        }
    }
    Ok(QkmeansRun {
        final_state: current,
        history,
        traces,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CopyPerturbation {
    pub d: usize,
    pub delta: f64,
    pub fidelity_loss: f64,
    pub bound: f64,
}

/// Explicit `d`-copy model of one weak distance evaluation. Each copy of
/// `state` is measured with Kraus pair `K± = sqrt((1 ± δA)/2)`, and the
/// loss is `1 - Σ_o |<Ψ|K_o|Ψ>|^2` over all `2^d` outcome strings, i.e.
/// one minus the expected fidelity of the post-measurement copies.
pub fn copy_perturbation(state: &StateVector, observable: &HermitianOperator, budget: &CopyBudget) -> Result<CopyPerturbation> {
    let n = state.dim();
    if observable.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: observable.dim(),
        });
    }
    let spectrum = observable.eigen()?;
    let radius = spectrum.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if radius * budget.delta > 1.0 {
        return Err(Error::InvalidInput(format!(
            "delta * |A| = {} exceeds 1; the Kraus pair is not positive",
            radius * budget.delta
        )));
    }
    let total = (n as f64).powi(budget.d as i32);
    if total > DENSE_DIM_CAP as f64 {
        return Err(Error::DimensionCap {
            dim: total as usize,
            cap: DENSE_DIM_CAP,
        });
    }
    let kraus = |sign: f64| {
        let v = &spectrum.vectors;
        let roots = nalgebra::DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                C64::new(((1.0 + sign * budget.delta * spectrum.values[r]) / 2.0).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        v * roots * v.adjoint()
    };
    let pair = [kraus(1.0), kraus(-1.0)];

    let copy_layout = |i: usize| Layout::single(format!("copy{i}"), n);
    let mut joint = state.relabel(copy_layout(0)?)?;
    for i in 1..budget.d {
        joint = joint.tensor(&state.relabel(copy_layout(i)?)?)?;
    }
    let copies = (0..budget.d)
        .map(|i| Subsystem::new(joint.layout(), &copy_layout(i)?))
        .collect::<Result<Vec<_>>>()?;
    let mut kept = 0.0;
    for outcome in 0..1usize << budget.d {
        let mut v = joint.amplitudes().to_vec();
        for (i, sub) in copies.iter().enumerate() {
            let k = &pair[(outcome >> i) & 1];
            for block in &sub.blocks {
                let local = nalgebra::DVector::from_iterator(n, block.iter().map(|&x| v[x]));
                for (&x, y) in block.iter().zip((k * local).iter()) {
                    v[x] = *y;
                }
            }
        }
        let overlap: C64 = joint.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        kept += overlap.norm_sqr();
    }
    Ok(CopyPerturbation {
        d: budget.d,
        delta: budget.delta,
        fidelity_loss: (1.0 - kept).max(0.0),
        bound: budget.perturbation_bound(),
    })
}
