use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("register dimension must be at least 1 (register `{0}`)")]
    ZeroDimension(String),
    #[error("register name `{0}` appears more than once")]
    DuplicateRegister(String),
    #[error("register `{0}` is not part of the layout")]
    UnknownRegister(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("operator is not Hermitian (max |A - A^H| entry {0:.3e})")]
    NotHermitian(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("postselection failed: outcome probability {0:.3e} is below 1e-14")]
    PostselectionFailed(f64),
    #[error("postselection did not succeed within {0} attempts")]
    RetryLimit(u64),
    #[error("small-angle bound violated: t * max norm = {0:.4} exceeds 0.1")]
    SmallAngle(f64),
    #[error("invalid label {label}: the data set has {count} vectors")]
    InvalidLabel { label: usize, count: usize },
    #[error("label subset is empty")]
    EmptySubset,
    #[error("simulated dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("enumeration of {size} tuples exceeds the budget of {budget}")]
    BudgetExceeded { size: f64, budget: f64 },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("leakage {0:.3} is too large for a meaningful assignment")]
    Leakage(f64),
    #[error("label {0} was never observed while decoding the clustering state")]
    Unobserved(usize),
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
