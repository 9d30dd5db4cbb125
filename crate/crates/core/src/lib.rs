//! Statevector simulation of quantum cluster assignment, adiabatic seed and
//! cluster finding, and an adiabatic variant of Lloyd's k-means iteration,
//! each paired with a classical brute-force oracle.

pub mod adiabatic;
pub mod classical;
pub mod distance;
pub mod error;
pub mod operator;
pub mod qkmeans;
pub mod rng;
pub mod state_prep;
pub mod statevector;

pub use error::{Error, Result};
pub use operator::{HermitianOperator, Representation, Spectrum};
pub use rng::SimRng;
pub use statevector::{Histogram, Layout, Projection, Register, StateVector, C64};
