//! Dense statevector over named qudit registers.
//!
//! The flat amplitude index is most-significant-first in layout order: for
//! registers `r_0 .. r_{n-1}` with digits `i_0 .. i_{n-1}`, the index is
//! `((i_0 * d_1 + i_1) * d_2 + i_2) ...`. Every state returned by a public
//! operation is renormalized, so its norm sits within 1e-12 of one.

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::HermitianOperator;
use crate::rng::SimRng;

pub type C64 = Complex64;

const NORM_TOLERANCE: f64 = 1e-10;
/// Outcome probabilities below this are treated as a failed postselection.
pub const POSTSELECTION_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Register {
    name: String,
    dim: usize,
}

impl Register {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        let name = name.into();
        if dim == 0 {
            return Err(Error::ZeroDimension(name));
        }
        Ok(Self { name, dim })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Ordered list of registers with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Layout {
    registers: Vec<Register>,
}

impl Layout {
    pub fn new(registers: Vec<Register>) -> Result<Self> {
        for (i, r) in registers.iter().enumerate() {
            if registers[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::DuplicateRegister(r.name.clone()));
            }
        }
        Ok(Self { registers })
    }

    pub fn single(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(vec![Register::new(name, dim)?])
    }

    /// `count` registers named `{prefix}0 .. {prefix}{count-1}`, all of dimension `dim`.
    pub fn uniform(prefix: &str, count: usize, dim: usize) -> Result<Self> {
        let regs = (0..count)
            .map(|i| Register::new(format!("{prefix}{i}"), dim))
            .collect::<Result<Vec<_>>>()?;
        Self::new(regs)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.registers.iter().map(|r| r.dim).product()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|r| r.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Register> {
        self.registers.iter().find(|r| r.name == name)
    }

    pub fn concat(&self, other: &Layout) -> Result<Layout> {
        let mut regs = self.registers.clone();
        regs.extend(other.registers.iter().cloned());
        Layout::new(regs)
    }

    /// Split a flat index into one digit per register.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.registers.len()];
        for (slot, r) in out.iter_mut().zip(&self.registers).rev() {
            *slot = index % r.dim;
            index /= r.dim;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.registers)
            .fold(0, |acc, (d, r)| acc * r.dim + d)
    }
}

/// Index bookkeeping for an operator or target state living on a subset of
/// a state's registers. `blocks[rest][sub]` is the flat index in the full
/// layout.
pub(crate) struct Subsystem {
    pub rest: Layout,
    pub sub_dim: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl Subsystem {
    pub fn new(full: &Layout, sub: &Layout) -> Result<Self> {
        let mut positions = Vec::with_capacity(sub.len());
        for r in sub.registers() {
            let pos = full
                .position(r.name())
                .ok_or_else(|| Error::UnknownRegister(r.name().to_string()))?;
            let have = full.registers()[pos].dim();
            if have != r.dim() {
                return Err(Error::DimensionMismatch {
                    expected: have,
                    found: r.dim(),
                });
            }
            positions.push(pos);
        }
        let rest = Layout::new(
            full.registers()
                .iter()
                .enumerate()
                .filter(|(i, _)| !positions.contains(i))
                .map(|(_, r)| r.clone())
                .collect(),
        )?;
        let sub_dim = sub.dim();
        let mut blocks = vec![vec![0usize; sub_dim]; rest.dim()];
        let mut sub_digits = vec![0usize; sub.len()];
        let mut rest_digits = Vec::with_capacity(rest.len());
        for flat in 0..full.dim() {
            let digits = full.digits(flat);
            for (slot, &p) in sub_digits.iter_mut().zip(&positions) {
                *slot = digits[p];
            }
            rest_digits.clear();
            rest_digits.extend(
                digits
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !positions.contains(i))
                    .map(|(_, d)| *d),
            );
            blocks[rest.index_of(&rest_digits)][sub.index_of(&sub_digits)] = flat;
        }
        Ok(Self {
            rest,
            sub_dim,
            blocks,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: Layout,
    amps: Vec<C64>,
}

/// Result of projecting part of a state onto a target state.
#[derive(Debug, Clone)]
pub struct Projection {
    pub probability: f64,
    /// Renormalized post-measurement state on the remaining registers;
    /// `None` when the probability is below [`POSTSELECTION_FLOOR`].
    pub collapsed: Option<StateVector>,
}

impl Projection {
    pub fn into_collapsed(self) -> Result<StateVector> {
        self.collapsed
            .ok_or(Error::PostselectionFailed(self.probability))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequency(&self, outcome: usize) -> f64 {
        self.counts[outcome] as f64 / self.shots() as f64
    }

    /// Most frequent outcome; ties go to the lowest index.
    pub fn mode(&self) -> Option<usize> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0 && best.map_or(true, |(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best.map(|(i, _)| i)
    }
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

impl StateVector {
    /// Build from amplitudes that are already normalized within 1e-10.
    pub fn from_amplitudes(layout: Layout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amps.len(),
            });
        }
        let norm = norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self::normalized_unchecked(layout, amps))
    }

    /// Build from any non-zero amplitude vector, dividing by its norm.
    pub fn from_unnormalized(layout: Layout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: amps.len(),
            });
        }
        let n2 = norm_sqr(&amps);
        if n2 == 0.0 || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self::normalized_unchecked(layout, amps))
    }

    pub(crate) fn normalized_unchecked(layout: Layout, mut amps: Vec<C64>) -> Self {
        let n = norm_sqr(&amps).sqrt();
        if n != 1.0 {
            amps.iter_mut().for_each(|a| *a /= n);
        }
        Self { layout, amps }
    }

    pub fn basis(layout: Layout, index: usize) -> Result<Self> {
        let dim = layout.dim();
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: index + 1,
            });
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    pub fn uniform(layout: Layout) -> Self {
        let dim = layout.dim();
        let a = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self {
            layout,
            amps: vec![a; dim],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Same amplitudes under renamed registers (dimensions must agree).
    pub fn relabel(&self, layout: Layout) -> Result<Self> {
        if layout.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: layout.dim(),
            });
        }
        Ok(Self {
            layout,
            amps: self.amps.clone(),
        })
    }

    /// Kronecker product; `self` supplies the most significant registers.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let layout = self.layout.concat(&other.layout)?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(Self::normalized_unchecked(layout, amps))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(
                "inner product needs identical layouts".into(),
            ));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// `e^{-iHt}|self>`, with `H` acting on a subset of the registers.
    pub fn evolve(&self, h: &HermitianOperator, t: f64) -> Result<StateVector> {
        let sub = Subsystem::new(&self.layout, h.layout())?;
        let prop = h.propagator(t);
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let mut buf = vec![C64::new(0.0, 0.0); sub.sub_dim];
        for block in &sub.blocks {
            for (b, &flat) in buf.iter_mut().zip(block) {
                *b = self.amps[flat];
            }
            let evolved = prop.apply(&buf);
            for (v, &flat) in evolved.into_iter().zip(block) {
                out[flat] = v;
            }
        }
        Ok(Self::normalized_unchecked(self.layout.clone(), out))
    }

    /// `H|self>` without normalization (the operator may act on a subset).
    pub fn apply_raw(&self, h: &HermitianOperator) -> Result<Vec<C64>> {
        let sub = Subsystem::new(&self.layout, h.layout())?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let mut buf = vec![C64::new(0.0, 0.0); sub.sub_dim];
        for block in &sub.blocks {
            for (b, &flat) in buf.iter_mut().zip(block) {
                *b = self.amps[flat];
            }
            for (v, &flat) in h.apply(&buf).into_iter().zip(block) {
                out[flat] = v;
            }
        }
        Ok(out)
    }

    /// `<self|H|self>`; the imaginary part is returned for residue checks.
    pub fn expectation(&self, h: &HermitianOperator) -> Result<C64> {
        let hv = self.apply_raw(h)?;
        Ok(self.amps.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum())
    }

    /// Project the registers of `target` onto `target`.
    pub fn project(&self, target: &StateVector) -> Result<Projection> {
        let sub = Subsystem::new(&self.layout, target.layout())?;
        let collapsed: Vec<C64> = sub
            .blocks
            .iter()
            .map(|block| {
                block
                    .iter()
                    .zip(&target.amps)
                    .map(|(&flat, t)| t.conj() * self.amps[flat])
                    .sum()
            })
            .collect();
        let probability = norm_sqr(&collapsed);
        let collapsed = (probability >= POSTSELECTION_FLOOR)
            .then(|| Self::normalized_unchecked(sub.rest, collapsed));
        Ok(Projection {
            probability,
            collapsed,
        })
    }

    /// Project a single register onto one of its basis levels.
    pub fn project_level(&self, register: &str, level: usize) -> Result<Projection> {
        let reg = self
            .layout
            .get(register)
            .ok_or_else(|| Error::UnknownRegister(register.to_string()))?
            .clone();
        let target = StateVector::basis(Layout::new(vec![reg])?, level)?;
        self.project(&target)
    }

    /// Born distribution over the joint outcomes of `registers`.
    pub fn marginal(&self, registers: &[&str]) -> Result<Vec<f64>> {
        let regs = registers
            .iter()
            .map(|n| {
                self.layout
                    .get(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownRegister(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let sub = Subsystem::new(&self.layout, &Layout::new(regs)?)?;
        let mut probs = vec![0.0; sub.sub_dim];
        for block in &sub.blocks {
            for (p, &flat) in probs.iter_mut().zip(block) {
                *p += self.amps[flat].norm_sqr();
            }
        }
        Ok(probs)
    }

    /// Sample `shots` joint outcomes of `registers` from the Born marginal.
    pub fn sample(&self, registers: &[&str], shots: u64, rng: &mut SimRng) -> Result<Histogram> {
        if shots == 0 {
            return Err(Error::InvalidInput("shots must be at least 1".into()));
        }
        let probs = self.marginal(registers)?;
        Ok(sample_distribution(&probs, shots, rng))
    }

    pub fn sample_register(&self, register: &str, shots: u64, rng: &mut SimRng) -> Result<Histogram> {
        self.sample(&[register], shots, rng)
    }
}

pub(crate) fn sample_distribution(probs: &[f64], shots: u64, rng: &mut SimRng) -> Histogram {
    let mut counts = vec![0u64; probs.len()];
    let dist = WeightedIndex::new(probs).expect("normalized distribution");
    for _ in 0..shots {
        counts[dist.sample(rng)] += 1;
    }
    Histogram { counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::HermitianOperator;
    use rand::Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit(name: &str) -> Layout {
        Layout::single(name, 2).unwrap()
    }

    fn random_state(layout: Layout, rng: &mut SimRng) -> StateVector {
        let amps = (0..layout.dim())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        StateVector::from_unnormalized(layout, amps).unwrap()
    }

    #[test]
    fn register_rejects_zero_dimension_and_duplicates() {
        assert!(matches!(Register::new("a", 0), Err(Error::ZeroDimension(_))));
        let r = Register::new("a", 2).unwrap();
        assert!(matches!(
            Layout::new(vec![r.clone(), r]),
            Err(Error::DuplicateRegister(_))
        ));
    }

    #[test]
    fn digits_round_trip_most_significant_first() {
        let l = Layout::new(vec![
            Register::new("a", 3).unwrap(),
            Register::new("b", 2).unwrap(),
        ])
        .unwrap();
        assert_eq!(l.digits(5), vec![2, 1]);
        assert_eq!(l.index_of(&[1, 0]), 2);
    }

    #[test]
    fn tensor_basis_and_plus() {
        let z = StateVector::basis(qubit("a"), 0).unwrap();
        let z2 = StateVector::basis(qubit("b"), 0).unwrap();
        let t = z.tensor(&z2).unwrap();
        assert_eq!(t.amplitudes()[0], c(1.0, 0.0));

        let plus = StateVector::uniform(qubit("a"));
        let one = StateVector::basis(qubit("b"), 1).unwrap();
        let t = plus.tensor(&one).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let want = [0.0, h, 0.0, h];
        for (a, w) in t.amplitudes().iter().zip(want) {
            assert!((a - c(w, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn tensor_matches_double_loop() {
        let mut rng = SimRng::new(3);
        let a = random_state(qubit("a"), &mut rng);
        let b = random_state(Layout::single("b", 3).unwrap(), &mut rng);
        let t = a.tensor(&b).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let want = a.amplitudes()[i] * b.amplitudes()[j];
                assert!((t.amplitudes()[i * 3 + j] - want).norm() < 1e-15);
            }
        }
        assert!((t.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_rejects_name_collision() {
        let a = StateVector::uniform(qubit("a"));
        assert!(matches!(a.tensor(&a), Err(Error::DuplicateRegister(_))));
    }

    #[test]
    fn evolve_sigma_x() {
        let zero = StateVector::basis(qubit("q"), 0).unwrap();
        let sx = HermitianOperator::sigma_x(qubit("q")).unwrap();
        let same = zero.evolve(&sx, 0.0).unwrap();
        assert!((same.fidelity(&zero).unwrap() - 1.0).abs() < 1e-15);

        let out = zero.evolve(&sx, PI / 2.0).unwrap();
        assert!(out.amplitudes()[0].norm() < 1e-15);
        assert!((out.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn evolve_on_subset_acts_as_identity_elsewhere() {
        let layout = qubit("a").concat(&qubit("b")).unwrap();
        let s = StateVector::basis(layout, 0).unwrap();
        let sx = HermitianOperator::sigma_x(qubit("b")).unwrap();
        let out = s.evolve(&sx, PI / 2.0).unwrap();
        // |00> -> -i|01>
        assert!((out.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn evolve_rejects_missing_register() {
        let s = StateVector::basis(qubit("a"), 0).unwrap();
        let sx = HermitianOperator::sigma_x(qubit("z")).unwrap();
        assert!(matches!(s.evolve(&sx, 1.0), Err(Error::UnknownRegister(_))));
    }

    #[test]
    fn project_deterministic_and_superposed() {
        let layout = qubit("anc").concat(&qubit("sys")).unwrap();
        let s = StateVector::basis(layout.clone(), 0).unwrap();
        let p = s.project_level("anc", 0).unwrap();
        assert!((p.probability - 1.0).abs() < 1e-15);
        let rest = p.into_collapsed().unwrap();
        assert_eq!(rest.layout().registers()[0].name(), "sys");
        assert!((rest.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-15);

        // (|0>|a> + |1>|b>)/sqrt2 with a = |0>, b = |+>
        let h = 1.0 / 2f64.sqrt();
        let amps = vec![c(h, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0)];
        let s = StateVector::from_amplitudes(layout, amps).unwrap();
        let p = s.project_level("anc", 1).unwrap();
        assert!((p.probability - 0.5).abs() < 1e-15);
        let b = p.into_collapsed().unwrap();
        assert!((b.amplitudes()[0] - c(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn project_flags_zero_probability() {
        let s = StateVector::basis(qubit("a"), 0).unwrap();
        let p = s.project_level("a", 1).unwrap();
        assert_eq!(p.probability, 0.0);
        assert!(matches!(
            p.into_collapsed(),
            Err(Error::PostselectionFailed(_))
        ));
    }

    #[test]
    fn project_matches_partial_inner_product_loop() {
        let mut rng = SimRng::new(11);
        let layout = qubit("anc").concat(&Layout::single("sys", 4).unwrap()).unwrap();
        let s = random_state(layout, &mut rng);
        let t = random_state(qubit("anc"), &mut rng);
        let p = s.project(&t).unwrap();
        let mut want = 0.0;
        for j in 0..4 {
            let mut acc = c(0.0, 0.0);
            for a in 0..2 {
                acc += t.amplitudes()[a].conj() * s.amplitudes()[a * 4 + j];
            }
            want += acc.norm_sqr();
        }
        assert!((p.probability - want).abs() < 1e-14);
    }

    #[test]
    fn sampling_deterministic_state() {
        let mut rng = SimRng::new(1);
        let s = StateVector::basis(qubit("q"), 1).unwrap();
        let h = s.sample_register("q", 100, &mut rng).unwrap();
        assert_eq!(h.counts, vec![0, 100]);
        assert!(s.sample_register("q", 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_within_five_sigma() {
        let mut rng = SimRng::new(5);
        let s = StateVector::uniform(qubit("q"));
        let shots = 100_000u64;
        let h = s.sample_register("q", shots, &mut rng).unwrap();
        let sigma = (shots as f64 * 0.25).sqrt();
        for &n in &h.counts {
            assert!((n as f64 - 50_000.0).abs() < 5.0 * sigma);
        }

        let s3 = random_state(Layout::single("t", 3).unwrap(), &mut rng);
        let h = s3.sample_register("t", shots, &mut rng).unwrap();
        for (i, p) in s3.probabilities().into_iter().enumerate() {
            let sigma = (shots as f64 * p * (1.0 - p)).sqrt();
            assert!((h.counts[i] as f64 - shots as f64 * p).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = random_state(Layout::single("t", 5).unwrap(), &mut SimRng::new(2));
        let a = s.sample_register("t", 1000, &mut SimRng::new(9)).unwrap();
        let b = s.sample_register("t", 1000, &mut SimRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inner_products() {
        let mut rng = SimRng::new(4);
        let v = random_state(Layout::single("x", 4).unwrap(), &mut rng);
        assert!((v.inner(&v).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        let z = StateVector::basis(qubit("q"), 0).unwrap();
        let o = StateVector::basis(qubit("q"), 1).unwrap();
        assert_eq!(z.inner(&o).unwrap(), c(0.0, 0.0));
        let w = random_state(Layout::single("x", 4).unwrap(), &mut rng);
        let mut want = c(0.0, 0.0);
        for i in 0..4 {
            want += v.amplitudes()[i].conj() * w.amplitudes()[i];
        }
        assert!((v.inner(&w).unwrap() - want).norm() < 1e-15);
        assert!(v.inner(&z).is_err());
    }
}
