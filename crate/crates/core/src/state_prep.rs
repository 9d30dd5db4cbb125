//! Classical data ingestion and amplitude encoding.
//!
//! Vectors are held the way a quantum RAM would hold them: per-entry
//! magnitude and phase, the vector norm, and a binary tree of sub-norms.
//! Encoding walks that tree top-down, splitting amplitude between the two
//! children of every node in proportion to their sub-norms, and applies the
//! stored phase at the leaves. Every stored quantity the walk touches is
//! charged to a [`QueryLedger`].

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::statevector::{Layout, Register, StateVector, C64};

/// Register holding the encoded vector (one level per vector entry).
pub const DATA_REGISTER: &str = "data";
/// Branch register of the labeled superposition: level 0 carries the query,
/// level `j + 1` the `j`-th member of the subset.
pub const ANCILLA_REGISTER: &str = "ancilla";

/// Dyadic partial sums of squared magnitudes.
///
/// `levels[0]` holds the leaves `|v_i|^2`; `levels[d]` holds the sums over
/// blocks of `2^d` consecutive entries; the last level is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SubnormTree {
    levels: Vec<Vec<f64>>,
}

impl SubnormTree {
    pub fn new(magnitudes: &[f64]) -> Self {
        assert!(magnitudes.len().is_power_of_two());
        let mut levels = vec![magnitudes.iter().map(|m| m * m).collect::<Vec<_>>()];
        while levels.last().unwrap().len() > 1 {
            let below = levels.last().unwrap();
            let next = below.chunks(2).map(|p| p[0] + p[1]).collect();
            levels.push(next);
        }
        Self { levels }
    }

    pub fn root(&self) -> f64 {
        self.levels.last().unwrap()[0]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Number of splits from root to leaves, i.e. log2 of the leaf count.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
struct StoredVector {
    values: Vec<C64>,
    magnitudes: Vec<f64>,
    phases: Vec<f64>,
    norm: f64,
    tree: SubnormTree,
}

impl StoredVector {
    fn new(values: Vec<C64>) -> Self {
        let magnitudes: Vec<f64> = values.iter().map(|v| v.norm()).collect();
        let phases = values
            .iter()
            .map(|v| if v.im == 0.0 { if v.re < 0.0 { std::f64::consts::PI } else { 0.0 } } else { v.arg() })
            .collect();
        let tree = SubnormTree::new(&magnitudes);
        let norm = tree.root().sqrt();
        Self {
            values,
            magnitudes,
            phases,
            norm,
            tree,
        }
    }
}

/// `M` vectors of common power-of-two dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    rows: Vec<StoredVector>,
    dim: usize,
    original_dim: usize,
}

/// Smallest power of two that is at least `max(n, 2)`.
pub fn padded_dimension(n: usize) -> usize {
    n.max(2).next_power_of_two()
}

impl DataSet {
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("data set has no vectors".into()))?;
        let original_dim = first.len();
        if original_dim == 0 {
            return Err(Error::InvalidInput("vectors must have at least one entry".into()));
        }
        let dim = padded_dimension(original_dim);
        let mut stored = Vec::with_capacity(rows.len());
        for (j, mut row) in rows.into_iter().enumerate() {
            if row.len() != original_dim {
                return Err(Error::InvalidInput(format!(
                    "vector {j} has {} entries, expected {original_dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::InvalidInput(format!("vector {j} has a non-finite entry")));
            }
            if row.iter().all(|v| v.norm_sqr() == 0.0) {
                return Err(Error::InvalidInput(format!("vector {j} is the zero vector")));
            }
            row.resize(dim, C64::new(0.0, 0.0));
            stored.push(StoredVector::new(row));
        }
        Ok(Self {
            rows: stored,
            dim,
            original_dim,
        })
    }

    pub fn from_real_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(|x| C64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    /// Number of vectors `M`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Padded dimension `N` (a power of two, at least 2).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entries per vector before zero padding; indices at or above this
    /// value are padding.
    pub fn original_dim(&self) -> usize {
        self.original_dim
    }

    pub fn qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    fn row(&self, j: usize) -> Result<&StoredVector> {
        self.rows.get(j).ok_or(Error::InvalidLabel {
            label: j,
            count: self.rows.len(),
        })
    }

    pub fn vector(&self, j: usize) -> Result<&[C64]> {
        Ok(&self.row(j)?.values)
    }

    pub fn norm(&self, j: usize) -> Result<f64> {
        Ok(self.row(j)?.norm)
    }

    pub fn magnitudes(&self, j: usize) -> Result<&[f64]> {
        Ok(&self.row(j)?.magnitudes)
    }

    pub fn phases(&self, j: usize) -> Result<&[f64]> {
        Ok(&self.row(j)?.phases)
    }

    pub fn subnorm_tree(&self, j: usize) -> Result<&SubnormTree> {
        Ok(&self.row(j)?.tree)
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[C64]> {
        self.rows.iter().map(|r| r.values.as_slice())
    }

    /// Check that a subset is non-empty and every label exists.
    pub fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        for &j in subset {
            self.row(j)?;
        }
        Ok(())
    }

    /// Zero-pad an external vector to this data set's dimension.
    pub fn pad(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.original_dim && v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.original_dim,
                found: v.len(),
            });
        }
        let mut out = v.to_vec();
        out.resize(self.dim, C64::new(0.0, 0.0));
        Ok(out)
    }

    /// Amplitudes of `|v_j>` produced by the sub-norm tree walk (uncharged).
    fn walk(&self, j: usize) -> Result<Vec<C64>> {
        let row = self.row(j)?;
        let levels = row.tree.levels();
        let mut weights = vec![1.0f64];
        for d in (0..row.tree.depth()).rev() {
            let parents = &levels[d + 1];
            let children = &levels[d];
            weights = weights
                .iter()
                .enumerate()
                .flat_map(|(p, w)| {
                    let total = parents[p];
                    let (l, r) = (children[2 * p], children[2 * p + 1]);
                    if total > 0.0 {
                        [w * (l / total).sqrt(), w * (r / total).sqrt()]
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect();
        }
        Ok(weights
            .into_iter()
            .zip(&row.phases)
            .map(|(w, &phi)| phase_factor(phi) * w)
            .collect())
    }
}

fn phase_factor(phi: f64) -> C64 {
    if phi == 0.0 {
        C64::new(1.0, 0.0)
    } else if phi == std::f64::consts::PI {
        C64::new(-1.0, 0.0)
    } else {
        C64::from_polar(1.0, phi)
    }
}

/// Parse CSV text: one vector per row, decimal floats, optional header.
///
/// A first row with any non-numeric field is taken as a header. Rows shorter
/// than a power of two are zero-padded.
pub fn parse_csv(text: &str) -> Result<DataSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() => {
                width = Some(record.len());
                continue;
            }
            Err(_) => {
                return Err(Error::Csv {
                    line,
                    message: "non-numeric field".into(),
                })
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Csv {
                line,
                message: "non-finite value".into(),
            });
        }
        match rows.first() {
            Some(first) if first.len() != values.len() => {
                return Err(Error::Csv {
                    line,
                    message: format!("row has {} fields, expected {}", values.len(), first.len()),
                })
            }
            _ => {}
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::Csv {
                line,
                message: "all-zero row cannot be amplitude encoded".into(),
            });
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            line: 0,
            message: "no data rows".into(),
        });
    }
    DataSet::from_real_rows(rows)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataSet> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Metered access counts against stored data.
#[derive(Debug, Default)]
pub struct QueryLedger {
    amplitude_reads: AtomicU64,
    norm_reads: AtomicU64,
    subnorm_reads: AtomicU64,
    data_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueryReport {
    pub amplitude_reads: u64,
    pub norm_reads: u64,
    pub subnorm_reads: u64,
    /// `M * N` of the data set the ledger meters.
    pub data_size: u64,
}

impl QueryReport {
    pub fn total_reads(&self) -> u64 {
        self.amplitude_reads + self.norm_reads + self.subnorm_reads
    }
}

impl QueryLedger {
    pub fn new(data_size: u64) -> Self {
        Self {
            data_size,
            ..Default::default()
        }
    }

    pub fn for_data(data: &DataSet) -> Self {
        Self::new((data.len() * data.dim()) as u64)
    }

    /// One tree walk over an `N = 2^qubits` vector: the root sub-norm plus
    /// both child sub-norms at each of the `qubits - 1` non-leaf levels, and
    /// one amplitude/phase read per level.
    pub fn charge_encode(&self, qubits: usize) {
        let q = qubits as u64;
        self.subnorm_reads.fetch_add((2 * q).saturating_sub(1), Ordering::Relaxed);
        self.amplitude_reads.fetch_add(q, Ordering::Relaxed);
    }

    pub fn charge_norms(&self, count: u64) {
        self.norm_reads.fetch_add(count, Ordering::Relaxed);
    }

    pub fn report(&self) -> QueryReport {
        QueryReport {
            amplitude_reads: self.amplitude_reads.load(Ordering::Relaxed),
            norm_reads: self.norm_reads.load(Ordering::Relaxed),
            subnorm_reads: self.subnorm_reads.load(Ordering::Relaxed),
            data_size: self.data_size,
        }
    }
}

pub fn report_queries(ledger: &QueryLedger) -> QueryReport {
    ledger.report()
}

/// Subnorm reads charged for one encode of a `2^qubits` vector.
pub fn subnorm_reads_per_encode(qubits: usize) -> u64 {
    (2 * qubits as u64).saturating_sub(1)
}

/// `|v_j> = v_j / |v_j|` on a single `N`-level register.
pub fn encode_vector(data: &DataSet, j: usize, ledger: &QueryLedger) -> Result<StateVector> {
    let amps = data.walk(j)?;
    ledger.charge_encode(data.qubits());
    StateVector::from_unnormalized(Layout::single(DATA_REGISTER, data.dim())?, amps)
}

/// Normalized encoding of a vector that is not part of the data set (e.g. a
/// user-held query). Nothing is charged.
pub fn encode_external(data: &DataSet, v: &[C64]) -> Result<StateVector> {
    StateVector::from_unnormalized(Layout::single(DATA_REGISTER, data.dim())?, data.pad(v)?)
}

/// `(|0>|u> + M^{-1/2} sum_j |j>|v_j>) / sqrt2` over `ancilla (M+1) ⊗ data (N)`.
///
/// The subset branch is a single superposed walk addressed by the ancilla,
/// so it is charged as one encode regardless of `M`. The query `u` is taken
/// as already prepared by the caller.
pub fn labeled_superposition(
    u: &StateVector,
    data: &DataSet,
    subset: &[usize],
    ledger: &QueryLedger,
) -> Result<StateVector> {
    data.check_subset(subset)?;
    if u.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: u.dim(),
        });
    }
    let m = subset.len();
    let n = data.dim();
    let layout = Layout::new(vec![
        Register::new(ANCILLA_REGISTER, m + 1)?,
        Register::new(DATA_REGISTER, n)?,
    ])?;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let branch = half / (m as f64).sqrt();
    let mut amps = Vec::with_capacity((m + 1) * n);
    amps.extend(u.amplitudes().iter().map(|a| a * half));
    for &j in subset {
        amps.extend(data.walk(j)?.into_iter().map(|a| a * branch));
    }
    ledger.charge_encode(data.qubits());
    StateVector::from_unnormalized(layout, amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn csv_unit_vectors() {
        let d = parse_csv("1,0\n0,1\n").unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.norm(0).unwrap(), 1.0);
        assert_eq!(d.norm(1).unwrap(), 1.0);
    }

    #[test]
    fn csv_three_four_five() {
        let d = parse_csv("3,4").unwrap();
        assert_eq!(d.norm(0).unwrap(), 5.0);
        assert_eq!(d.subnorm_tree(0).unwrap().root(), 25.0);
    }

    #[test]
    fn csv_header_and_padding() {
        let d = parse_csv("x,y,z\n1,2,3\n-1,0,2\n").unwrap();
        assert_eq!((d.len(), d.dim(), d.original_dim()), (2, 4, 3));
        assert_eq!(d.vector(1).unwrap()[3], c(0.0));
        assert_eq!(d.phases(1).unwrap()[0], std::f64::consts::PI);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv(""), Err(Error::Csv { .. })));
        assert!(matches!(parse_csv("1,2\n3\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse_csv("1,2\n3,x\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse_csv("1,2\n0,0\n"), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse_csv("a,b\n"), Err(Error::Csv { .. })));
    }

    #[test]
    fn csv_random_norms_match_recomputation() {
        let mut rng = SimRng::new(8);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let text: String = rows
            .iter()
            .map(|r| r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        let d = parse_csv(&text).unwrap();
        for (j, r) in rows.iter().enumerate() {
            let want = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((d.norm(j).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn subnorm_tree_parent_child_identity() {
        let t = SubnormTree::new(&[0.3, 1.0, 2.0, 0.0, 0.5, 0.1, 4.0, 1.5]);
        for d in 1..t.levels().len() {
            for (p, v) in t.levels()[d].iter().enumerate() {
                assert_eq!(*v, t.levels()[d - 1][2 * p] + t.levels()[d - 1][2 * p + 1]);
            }
        }
        assert_eq!(t.depth(), 3);
    }

    #[test]
    fn encode_basis_and_three_four() {
        let ledger = QueryLedger::new(0);
        let d = DataSet::from_real_rows(vec![vec![1.0, 0.0, 0.0, 0.0], vec![3.0, 4.0, 0.0, 0.0]]).unwrap();
        let s = encode_vector(&d, 0, &ledger).unwrap();
        assert_eq!(s.amplitudes()[0], c(1.0));
        let d2 = DataSet::from_real_rows(vec![vec![3.0, 4.0]]).unwrap();
        let s = encode_vector(&d2, 0, &ledger).unwrap();
        assert!((s.amplitudes()[0] - c(0.6)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - c(0.8)).norm() < 1e-15);
        assert!(matches!(encode_vector(&d2, 3, &ledger), Err(Error::InvalidLabel { .. })));
    }

    #[test]
    fn encode_random_complex_matches_normalization() {
        let mut rng = SimRng::new(12);
        let v: Vec<C64> = (0..8)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let d = DataSet::from_rows(vec![v.clone()]).unwrap();
        let s = encode_vector(&d, 0, &QueryLedger::new(0)).unwrap();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for (a, x) in s.amplitudes().iter().zip(&v) {
            assert!((a - x / norm).norm() < 1e-12);
        }
    }

    #[test]
    fn encode_charges_tree_walk() {
        let ledger = QueryLedger::new(8);
        let r = ledger.report();
        assert_eq!(r.total_reads(), 0);
        let d = DataSet::from_real_rows(vec![vec![1.0; 8]]).unwrap();
        encode_vector(&d, 0, &ledger).unwrap();
        let r = ledger.report();
        assert_eq!((r.subnorm_reads, r.amplitude_reads, r.norm_reads), (5, 3, 0));
    }

    #[test]
    fn labeled_superposition_small_cases() {
        let ledger = QueryLedger::new(0);
        let d = DataSet::from_real_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let u = encode_vector(&d, 0, &ledger).unwrap();
        let s = labeled_superposition(&u, &d, &[0], &ledger).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [h, 0.0, h, 0.0];
        for (a, w) in s.amplitudes().iter().zip(want) {
            assert!((a - c(w)).norm() < 1e-15);
        }

        let s = labeled_superposition(&u, &d, &[0, 1], &ledger).unwrap();
        let want = [h, 0.0, 0.5, 0.0, 0.0, 0.5];
        for (a, w) in s.amplitudes().iter().zip(want) {
            assert!((a - c(w)).norm() < 1e-15);
        }
        assert!(matches!(labeled_superposition(&u, &d, &[], &ledger), Err(Error::EmptySubset)));
    }
}
