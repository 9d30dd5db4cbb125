//! Quantum estimation of the distance from a vector to a cluster mean.
//!
//! The estimator prepares
//! `|psi> = (|0>|u> + M^{-1/2} sum_j |j>|v_j>) / sqrt2` and projects its
//! ancilla onto `|phi> = Z^{-1/2} (|u| |0> - M^{-1/2} sum_j |v_j| |j>)` with
//! `Z = |u|^2 + (1/M) sum_j |v_j|^2`. The projection amplitude is
//! `(u - mean) / sqrt(2Z)`, so the squared distance is `2 Z p` where `p` is
//! the success probability.
//!
//! `|phi>` is either written down from stored norms (exact mode) or
//! prepared by evolving under `(|u||0><0| + sum_j |v_j||j><j|) ⊗ sigma_x`
//! and postselecting a flag qubit (sampled mode). The flag succeeds with
//! probability `(sin^2(|u|t) + (1/M) sum_j sin^2(|v_j|t)) / 2`, which tends
//! to `Z t^2 / 2` for small `t` and so also yields an estimate of `Z`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::HermitianOperator;
use crate::rng::SimRng;
use crate::state_prep::{encode_external, labeled_superposition, DataSet, QueryLedger, ANCILLA_REGISTER};
use crate::statevector::{sample_distribution, Layout, Register, StateVector, C64, POSTSELECTION_FLOOR};

/// Largest allowed `t * max_norm`.
pub const SMALL_ANGLE_BOUND: f64 = 0.1;
/// Default `t * max_norm` when no evolution time is configured.
pub const DEFAULT_ANGLE: f64 = 0.05;
pub const FLAG_REGISTER: &str = "flag";
/// Qubit budget for the q-fold product state of the nonlinear metric.
pub const DEFAULT_QUBIT_BUDGET: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sampled,
}

/// A quantum-estimated scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    /// Zero in exact mode.
    pub shots: u64,
    pub mode: Mode,
}

pub type DistanceEstimate = Estimate;

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            shots: 0,
            mode: Mode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub mode: Mode,
    pub shots: u64,
    /// Evolution time for the flag preparation; `None` picks
    /// `DEFAULT_ANGLE / max_norm`.
    pub time: Option<f64>,
    /// Postselection attempts allowed per prepared copy of `|phi>`.
    pub max_attempts: u64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Exact,
            shots: 10_000,
            time: None,
            max_attempts: 1_000_000,
        }
    }
}

impl EstimatorOptions {
    pub fn sampled(shots: u64) -> Self {
        Self {
            mode: Mode::Sampled,
            shots,
            ..Self::default()
        }
    }
}

/// `|u|` and the member norms `|v_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Norms {
    pub query: f64,
    pub members: Vec<f64>,
}

impl Norms {
    pub fn new(query: f64, members: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptySubset);
        }
        if std::iter::once(&query).chain(&members).any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::InvalidInput("norms must be finite and positive".into()));
        }
        Ok(Self { query, members })
    }

    pub fn z(&self) -> f64 {
        let m = self.members.len() as f64;
        self.query * self.query + self.members.iter().map(|n| n * n).sum::<f64>() / m
    }

    pub fn max(&self) -> f64 {
        self.members.iter().copied().fold(self.query, f64::max)
    }

    pub fn default_time(&self) -> f64 {
        DEFAULT_ANGLE / self.max()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidInput(format!("evolution time {t} must be non-negative")));
        }
        let angle = t * self.max();
        if angle > SMALL_ANGLE_BOUND * (1.0 + 1e-12) {
            return Err(Error::SmallAngle(angle));
        }
        Ok(())
    }
}

/// Evolution time and normalization of one `|phi>` preparation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiJob {
    pub t: f64,
    pub z: f64,
    /// Probability that the flag qubit reads 1.
    pub success_probability: f64,
}

fn ancilla_layout(m: usize) -> Result<Layout> {
    Layout::single(ANCILLA_REGISTER, m + 1)
}

/// State after `e^{-iHt}` with `H = diag(|u|, |v_1|, ...) ⊗ sigma_x` applied
/// to `(|0> - M^{-1/2} sum_j |j>) ⊗ |0> / sqrt2`.
pub fn flag_evolution(norms: &Norms, t: f64) -> Result<StateVector> {
    let m = norms.members.len();
    let anc = ancilla_layout(m)?;
    let mut start = vec![C64::new(-1.0 / (m as f64).sqrt(), 0.0); m + 1];
    start[0] = C64::new(1.0, 0.0);
    let start = StateVector::from_unnormalized(anc.clone(), start)?;
    let flag = StateVector::basis(Layout::single(FLAG_REGISTER, 2)?, 0)?;
    let initial = start.tensor(&flag)?;

    let mut diag = Vec::with_capacity(m + 1);
    diag.push(norms.query);
    diag.extend(&norms.members);
    let h = HermitianOperator::diagonal(anc, diag)?
        .tensor(&HermitianOperator::sigma_x(Layout::single(FLAG_REGISTER, 2)?)?)?;
    initial.evolve(&h, t)
}

/// Probability that the flag qubit of [`flag_evolution`] reads 1.
pub fn flag_probability(norms: &Norms, t: f64) -> Result<f64> {
    Ok(flag_evolution(norms, t)?.project_level(FLAG_REGISTER, 1)?.probability)
}

/// Prepare `|phi>` on the ancilla by flag postselection.
///
/// The returned state is proportional to
/// `sin(|u|t)|0> - M^{-1/2} sum_j sin(|v_j|t)|j>`.
pub fn build_phi_state(norms: &Norms, t: f64) -> Result<(StateVector, PhiJob)> {
    norms.check_time(t)?;
    let projection = flag_evolution(norms, t)?.project_level(FLAG_REGISTER, 1)?;
    let job = PhiJob {
        t,
        z: norms.z(),
        success_probability: projection.probability,
    };
    Ok((projection.into_collapsed()?, job))
}

/// `|phi>` written directly from the norms.
pub fn phi_state_exact(norms: &Norms) -> Result<StateVector> {
    let m = norms.members.len();
    let scale = 1.0 / (m as f64).sqrt();
    let mut amps = Vec::with_capacity(m + 1);
    amps.push(C64::new(norms.query, 0.0));
    amps.extend(norms.members.iter().map(|n| C64::new(-scale * n, 0.0)));
    StateVector::from_unnormalized(ancilla_layout(m)?, amps)
}

/// Estimate `Z` as `2 p / t^2` from the flag probability `p`.
pub fn estimate_z(norms: &Norms, t: f64, opts: &EstimatorOptions, rng: &mut SimRng) -> Result<Estimate> {
    norms.check_time(t)?;
    let p = flag_probability(norms, t)?;
    if p < POSTSELECTION_FLOOR {
        return Err(Error::PostselectionFailed(p));
    }
    let scale = 2.0 / (t * t);
    match opts.mode {
        Mode::Exact => Ok(Estimate::exact(scale * p)),
        Mode::Sampled => {
            let shots = check_shots(opts.shots)?;
            let hits = Binomial::new(shots, p.min(1.0))
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .sample(rng);
            let ph = hits as f64 / shots as f64;
            Ok(Estimate {
                value: scale * ph,
                std_error: scale * (ph * (1.0 - ph) / shots as f64).sqrt(),
                shots,
                mode: Mode::Sampled,
            })
        }
    }
}

fn check_shots(shots: u64) -> Result<u64> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    Ok(shots)
}

fn bernoulli_count(shots: u64, p: f64, rng: &mut SimRng) -> Result<u64> {
    Ok(Binomial::new(shots, p.clamp(0.0, 1.0))
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sample(rng))
}

/// Squared distance from `u` to the mean of `cluster`.
///
/// `u` is treated as the caller's own query vector and is not charged to the
/// ledger; the cluster branch and the norm lookup for `|phi>` are. In sampled
/// mode every shot consumes a fresh `|psi>` and a fresh postselected `|phi>`,
/// and each postselection attempt costs a norm lookup.
pub fn distance_to_centroid(
    u: &[C64],
    data: &DataSet,
    cluster: &[usize],
    opts: &EstimatorOptions,
    ledger: &QueryLedger,
    rng: &mut SimRng,
) -> Result<DistanceEstimate> {
    data.check_subset(cluster)?;
    let u = data.pad(u)?;
    let u_norm = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let members = cluster.iter().map(|&j| data.norm(j)).collect::<Result<Vec<_>>>()?;
    let norms = Norms::new(u_norm, members)?;
    let u_state = encode_external(data, &u)?;
    let psi = labeled_superposition(&u_state, data, cluster, ledger)?;
    let z = norms.z();

    match opts.mode {
        Mode::Exact => {
            ledger.charge_norms(1);
            let phi = phi_state_exact(&norms)?;
            let p = psi.project(&phi)?.probability;
            Ok(Estimate::exact(2.0 * z * p))
        }
        Mode::Sampled => {
            let shots = check_shots(opts.shots)?;
            let t = opts.time.unwrap_or_else(|| norms.default_time());
            let (phi, job) = build_phi_state(&norms, t)?;
            let p_flag = job.success_probability;

            let geometric = Geometric::new(p_flag).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut attempts = 0u64;
            for _ in 0..shots {
                let failures = geometric.sample(rng);
                if failures >= opts.max_attempts {
                    return Err(Error::RetryLimit(opts.max_attempts));
                }
                attempts += failures + 1;
            }
            ledger.charge_norms(attempts);
            for _ in 1..shots {
                ledger.charge_encode(data.qubits());
            }

            let p = psi.project(&phi)?.probability;
            let hits = bernoulli_count(shots, p, rng)?;
            let n = shots as f64;
            let ph = hits as f64 / n;
            let pf = n / attempts as f64;
            let zh = 2.0 * pf / (t * t);
            let var_p = ph * (1.0 - ph) / n;
            let var_z = (2.0 / (t * t)).powi(2) * pf * pf * (1.0 - pf) / n;
            Ok(Estimate {
                value: 2.0 * zh * ph,
                std_error: 2.0 * (ph * ph * var_z + zh * zh * var_p).sqrt(),
                shots,
                mode: Mode::Sampled,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapTest {
    /// Estimate of `|<a|b>|^2`.
    pub overlap: Estimate,
    /// Probability that the control reads 0, from the simulated circuit.
    pub success_probability: f64,
}

/// Control-qubit success probability of the swap test, simulated directly:
/// after H, controlled-SWAP, H the control-0 branch is `(|ab> + |ba>) / 2`.
pub fn swap_test_probability(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.layout() != b.layout() {
        return Err(Error::LayoutMismatch("swap test needs identical layouts".into()));
    }
    let (x, y) = (a.amplitudes(), b.amplitudes());
    let n = x.len();
    let mut p = 0.0;
    for i in 0..n {
        for j in 0..n {
            p += ((x[i] * y[j] + y[i] * x[j]) * 0.5).norm_sqr();
        }
    }
    Ok(p)
}

pub fn swap_test(a: &StateVector, b: &StateVector, opts: &EstimatorOptions, rng: &mut SimRng) -> Result<SwapTest> {
    let success_probability = swap_test_probability(a, b)?;
    let overlap = match opts.mode {
        Mode::Exact => Estimate::exact(a.inner(b)?.norm_sqr()),
        Mode::Sampled => {
            let shots = check_shots(opts.shots)?;
            let q = bernoulli_count(shots, success_probability, rng)? as f64 / shots as f64;
            Estimate {
                value: (2.0 * q - 1.0).clamp(0.0, 1.0),
                std_error: 2.0 * (q * (1.0 - q) / shots as f64).sqrt(),
                shots,
                mode: Mode::Sampled,
            }
        }
    };
    Ok(SwapTest {
        overlap,
        success_probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    V,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoClassAssignment {
    pub class: Class,
    /// Set when the two distances are indistinguishable; the class is then V.
    pub tie: bool,
    pub distance_v: DistanceEstimate,
    pub distance_w: DistanceEstimate,
}

const EXACT_TIE: f64 = 1e-12;

/// Assign `u` to whichever class mean is closer.
pub fn assign_two_class(
    u: &[C64],
    data: &DataSet,
    v: &[usize],
    w: &[usize],
    opts: &EstimatorOptions,
    ledger: &QueryLedger,
    rng: &mut SimRng,
) -> Result<TwoClassAssignment> {
    data.check_subset(v)?;
    data.check_subset(w)?;
    let dv = distance_to_centroid(u, data, v, opts, ledger, rng)?;
    let dw = distance_to_centroid(u, data, w, opts, ledger, rng)?;
    let threshold = match opts.mode {
        Mode::Exact => EXACT_TIE,
        Mode::Sampled => dv.std_error.hypot(dw.std_error),
    };
    let tie = (dv.value - dw.value).abs() < threshold;
    let class = if tie || dv.value < dw.value { Class::V } else { Class::W };
    Ok(TwoClassAssignment {
        class,
        tie,
        distance_v: dv,
        distance_w: dw,
    })
}

/// Hermitian observable on `q` copies of `|u>|v>`, registers ordered
/// `u0, v0, u1, v1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearMetricSpec {
    q: usize,
    dim: usize,
    observable: HermitianOperator,
}

fn product_layout(q: usize, dim: usize, budget_qubits: usize) -> Result<Layout> {
    if q == 0 {
        return Err(Error::InvalidInput("copy count q must be at least 1".into()));
    }
    let total = (dim as f64).powi(2 * q as i32);
    let cap = 2f64.powi(budget_qubits as i32);
    if total > cap {
        return Err(Error::DimensionCap {
            dim: total.min(usize::MAX as f64) as usize,
            cap: cap as usize,
        });
    }
    let mut regs = Vec::with_capacity(2 * q);
    for i in 0..q {
        regs.push(Register::new(format!("u{i}"), dim)?);
        regs.push(Register::new(format!("v{i}"), dim)?);
    }
    Layout::new(regs)
}

impl NonlinearMetricSpec {
    pub fn new(q: usize, dim: usize, matrix: DMatrix<C64>) -> Result<Self> {
        Self::with_budget(q, dim, matrix, DEFAULT_QUBIT_BUDGET)
    }

    pub fn with_budget(q: usize, dim: usize, matrix: DMatrix<C64>, budget_qubits: usize) -> Result<Self> {
        let layout = product_layout(q, dim, budget_qubits)?;
        Ok(Self {
            q,
            dim,
            observable: HermitianOperator::dense(layout, matrix)?,
        })
    }

    pub fn identity(q: usize, dim: usize) -> Result<Self> {
        let layout = product_layout(q, dim, DEFAULT_QUBIT_BUDGET)?;
        Ok(Self {
            q,
            dim,
            observable: HermitianOperator::identity(layout),
        })
    }

    /// Product of SWAPs exchanging `u_i` and `v_i` in every copy; its
    /// expectation is `|<u|v>|^{2q}`.
    pub fn swap(q: usize, dim: usize) -> Result<Self> {
        let layout = product_layout(q, dim, DEFAULT_QUBIT_BUDGET)?;
        let n = layout.dim();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for i in 0..n {
            let mut digits = layout.digits(i);
            for pair in digits.chunks_mut(2) {
                pair.swap(0, 1);
            }
            m[(layout.index_of(&digits), i)] = C64::new(1.0, 0.0);
        }
        Ok(Self {
            q,
            dim,
            observable: HermitianOperator::dense(layout, m)?,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    fn product_state(&self, u: &StateVector, v: &StateVector) -> Result<StateVector> {
        for s in [u, v] {
            if s.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: s.dim(),
                });
            }
        }
        let mut state: Option<StateVector> = None;
        for i in 0..self.q {
            let ui = u.relabel(Layout::single(format!("u{i}"), self.dim)?)?;
            let vi = v.relabel(Layout::single(format!("v{i}"), self.dim)?)?;
            let pair = ui.tensor(&vi)?;
            state = Some(match state {
                None => pair,
                Some(s) => s.tensor(&pair)?,
            });
        }
        Ok(state.expect("q >= 1"))
    }
}

/// `(<u|<v|)^{⊗q} L (|u>|v>)^{⊗q}` including any imaginary residue.
pub fn quadratic_form(u: &StateVector, v: &StateVector, spec: &NonlinearMetricSpec) -> Result<C64> {
    spec.product_state(u, v)?.expectation(&spec.observable)
}

pub fn nonlinear_expectation(
    u: &StateVector,
    v: &StateVector,
    spec: &NonlinearMetricSpec,
    opts: &EstimatorOptions,
    rng: &mut SimRng,
) -> Result<Estimate> {
    match opts.mode {
        Mode::Exact => Ok(Estimate::exact(quadratic_form(u, v, spec)?.re)),
        Mode::Sampled => {
            let shots = check_shots(opts.shots)?;
            let state = spec.product_state(u, v)?;
            let spectrum = spec.observable.eigen()?;
            let probs: Vec<f64> = (0..spectrum.values.len())
                .map(|i| {
                    spectrum
                        .vectors
                        .column(i)
                        .iter()
                        .zip(state.amplitudes())
                        .map(|(e, a)| e.conj() * a)
                        .sum::<C64>()
                        .norm_sqr()
                })
                .collect();
            let hist = sample_distribution(&probs, shots, rng);
            let n = shots as f64;
            let mean = hist
                .counts
                .iter()
                .zip(&spectrum.values)
                .map(|(&c, &e)| c as f64 * e)
                .sum::<f64>()
                / n;
            let var = hist
                .counts
                .iter()
                .zip(&spectrum.values)
                .map(|(&c, &e)| c as f64 * (e - mean).powi(2))
                .sum::<f64>()
                / n;
            Ok(Estimate {
                value: mean,
                std_error: (var / n).sqrt(),
                shots,
                mode: Mode::Sampled,
            })
        }
    }
}

/// Draw a random unit vector (test and fixture helper).
pub fn random_unit_state(layout: Layout, rng: &mut SimRng) -> StateVector {
    let amps = (0..layout.dim())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    StateVector::from_unnormalized(layout, amps).expect("non-zero random vector")
}
