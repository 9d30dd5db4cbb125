//! Hermitian operators over a register layout.

use faer::complex_native::c64;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::statevector::{Layout, StateVector};

type C64 = Complex64;

const HERMITIAN_TOLERANCE: f64 = 1e-12;
/// Largest dimension handed to a dense eigensolver.
pub const DENSE_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// Real diagonal in the computational basis.
    Diagonal(Vec<f64>),
    Dense(DMatrix<C64>),
    /// `1 - |r><r|` for a normalized reference vector `r`.
    ComplementProjector(Vec<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    layout: Layout,
    repr: Representation,
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn gap(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            self.values[1] - self.values[0]
        }
    }

    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i).iter().copied().collect()
    }
}

pub(crate) enum Propagator {
    Phases(Vec<C64>),
    Matrix(DMatrix<C64>),
    Projector { reference: Vec<C64>, phase: C64 },
}

impl Propagator {
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Propagator::Phases(p) => v.iter().zip(p).map(|(a, b)| a * b).collect(),
            Propagator::Matrix(u) => {
                let col = nalgebra::DVector::from_column_slice(v);
                (u * col).iter().copied().collect()
            }
            Propagator::Projector { reference, phase } => {
                let overlap: C64 = reference.iter().zip(v).map(|(r, x)| r.conj() * x).sum();
                let k = (C64::new(1.0, 0.0) - phase) * overlap;
                v.iter()
                    .zip(reference)
                    .map(|(x, r)| phase * x + k * r)
                    .collect()
            }
        }
    }
}

/// Eigenpairs of a real symmetric matrix, ascending.
pub(crate) fn real_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = faer::Mat::<f64>::from_fn(n, n, |r, c| m[(r, c)]).selfadjoint_eigendecomposition(faer::Side::Lower);
    let (s, u) = (eig.s().column_vector(), eig.u());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&i| s[i]).collect();
    (values, DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]))
}

/// Hermitian eigensolve. Uses faer rather than nalgebra's `symmetric_eigen`,
/// which leaves residuals near 1e-10 on matrices with clustered levels and
/// visibly corrupts long products of step propagators.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<C64>) -> Spectrum {
    let n = m.nrows();
    if m.iter().all(|x| x.im == 0.0) {
        let (values, vectors) = real_symmetric_eigen(&m.map(|x| x.re));
        return Spectrum {
            values,
            vectors: vectors.map(|x| C64::new(x, 0.0)),
        };
    }
    let eig = faer::Mat::<c64>::from_fn(n, n, |r, c| c64::new(m[(r, c)].re, m[(r, c)].im))
        .selfadjoint_eigendecomposition(faer::Side::Lower);
    let (s, u) = (eig.s().column_vector(), eig.u());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    Spectrum {
        values: order.iter().map(|&i| s[i].re).collect(),
        vectors: DMatrix::from_fn(n, n, |r, c| {
            let x = u[(r, order[c])];
            C64::new(x.re, x.im)
        }),
    }
}

fn check_dim(layout: &Layout, found: usize) -> Result<()> {
    if layout.dim() != found {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found,
        });
    }
    Ok(())
}

impl HermitianOperator {
    pub fn diagonal(layout: Layout, entries: Vec<f64>) -> Result<Self> {
        check_dim(&layout, entries.len())?;
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("diagonal entries must be finite".into()));
        }
        Ok(Self {
            layout,
            repr: Representation::Diagonal(entries),
        })
    }

    /// Dense operator; rejected unless `A = A^H` entrywise within 1e-12.
    pub fn dense(layout: Layout, matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput("operator matrix must be square".into()));
        }
        check_dim(&layout, matrix.nrows())?;
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self {
            layout,
            repr: Representation::Dense(matrix),
        })
    }

    /// `1 - |psi><psi|` on the registers of `psi`.
    pub fn complement_projector(psi: &StateVector) -> Self {
        Self {
            layout: psi.layout().clone(),
            repr: Representation::ComplementProjector(psi.amplitudes().to_vec()),
        }
    }

    pub fn identity(layout: Layout) -> Self {
        let dim = layout.dim();
        Self {
            layout,
            repr: Representation::Diagonal(vec![1.0; dim]),
        }
    }

    pub fn sigma_x(layout: Layout) -> Result<Self> {
        check_dim(&layout, 2)?;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self::dense(layout, DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]))
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn diagonal_entries(&self) -> Option<&[f64]> {
        match &self.repr {
            Representation::Diagonal(d) => Some(d),
            _ => None,
        }
    }

    /// Same operator on renamed registers of matching dimension.
    pub fn relabel(&self, layout: Layout) -> Result<Self> {
        check_dim(&layout, self.dim())?;
        Ok(Self {
            layout,
            repr: self.repr.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let repr = match &self.repr {
            Representation::Diagonal(d) => {
                Representation::Diagonal(d.iter().map(|x| x * factor).collect())
            }
            other => Representation::Dense(self.dense_matrix_of(other) * C64::new(factor, 0.0)),
        };
        Self {
            layout: self.layout.clone(),
            repr,
        }
    }

    fn dense_matrix_of(&self, repr: &Representation) -> DMatrix<C64> {
        let n = self.dim();
        match repr {
            Representation::Diagonal(d) => {
                DMatrix::from_fn(n, n, |r, c| if r == c { C64::new(d[r], 0.0) } else { C64::new(0.0, 0.0) })
            }
            Representation::Dense(m) => m.clone(),
            Representation::ComplementProjector(psi) => DMatrix::from_fn(n, n, |r, c| {
                let delta = if r == c { 1.0 } else { 0.0 };
                C64::new(delta, 0.0) - psi[r] * psi[c].conj()
            }),
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        if self.dim() > DENSE_DIM_CAP {
            return Err(Error::DimensionCap {
                dim: self.dim(),
                cap: DENSE_DIM_CAP,
            });
        }
        Ok(self.dense_matrix_of(&self.repr))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &HermitianOperator) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        if let (Representation::Diagonal(a), Representation::Diagonal(b)) = (&self.repr, &other.repr) {
            let entries = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
            return Self::diagonal(layout, entries);
        }
        let a = self.to_dense()?;
        let b = other.to_dense()?;
        Self::dense(layout, a.kronecker(&b))
    }

    /// `(1 - s) a + s b`, dense unless both inputs are diagonal.
    pub fn interpolate(a: &HermitianOperator, b: &HermitianOperator, s: f64) -> Result<Self> {
        if a.layout != b.layout {
            return Err(Error::LayoutMismatch("interpolated operators must share a layout".into()));
        }
        if let (Representation::Diagonal(x), Representation::Diagonal(y)) = (&a.repr, &b.repr) {
            let entries = x.iter().zip(y).map(|(p, q)| (1.0 - s) * p + s * q).collect();
            return Self::diagonal(a.layout.clone(), entries);
        }
        let m = a.to_dense()? * C64::new(1.0 - s, 0.0) + b.to_dense()? * C64::new(s, 0.0);
        Ok(Self {
            layout: a.layout.clone(),
            repr: Representation::Dense(m),
        })
    }

    /// `H v` for a vector over this operator's own layout.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        match &self.repr {
            Representation::Diagonal(d) => v.iter().zip(d).map(|(a, x)| a * x).collect(),
            Representation::Dense(m) => {
                let col = nalgebra::DVector::from_column_slice(v);
                (m * col).iter().copied().collect()
            }
            Representation::ComplementProjector(psi) => {
                let overlap: C64 = psi.iter().zip(v).map(|(r, x)| r.conj() * x).sum();
                v.iter().zip(psi).map(|(x, r)| x - overlap * r).collect()
            }
        }
    }

    pub fn eigen(&self) -> Result<Spectrum> {
        if let Representation::Diagonal(d) = &self.repr {
            let n = d.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
            let values = order.iter().map(|&i| d[i]).collect();
            let vectors = DMatrix::from_fn(n, n, |r, c| {
                if r == order[c] {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            return Ok(Spectrum { values, vectors });
        }
        Ok(sorted_symmetric_eigen(self.to_dense()?))
    }

    pub(crate) fn propagator(&self, t: f64) -> Propagator {
        match &self.repr {
            Representation::Diagonal(d) => {
                Propagator::Phases(d.iter().map(|x| C64::from_polar(1.0, -x * t)).collect())
            }
            Representation::ComplementProjector(psi) => Propagator::Projector {
                reference: psi.clone(),
                phase: C64::from_polar(1.0, -t),
            },
            Representation::Dense(m) => {
                let spec = sorted_symmetric_eigen(m.clone());
                let n = spec.values.len();
                let phases = DMatrix::from_fn(n, n, |r, c| {
                    if r == c {
                        C64::from_polar(1.0, -spec.values[r] * t)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                Propagator::Matrix(&spec.vectors * phases * spec.vectors.adjoint())
            }
        }
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}
