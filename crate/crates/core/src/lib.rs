//! Bayesian post-processing of classical-shadow data.
//!
//! The crate simulates randomized single-qubit Pauli and global Clifford
//! measurements on small registers, turns the records into unbiased
//! estimates of GHZ fidelity and second Rényi entropy, and trains a set
//! transformer that refines those estimates using a prior over states.
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the pipeline uses throughout.

pub mod clifford;
pub mod encoding;
pub mod error;
pub mod estimators;
pub mod neural;
pub mod pipeline;
pub mod qcore;
pub mod scalar;
pub mod shadows;
pub mod verify;

pub use error::{Error, FormatError, Result};
pub use scalar::{Real, C};

pub type PureState = qcore::PureState<f64>;
pub type DensityMatrix = qcore::DensityMatrix<f64>;
pub type DensityMatrixF32 = qcore::DensityMatrix<f32>;
pub use clifford::{CliffordCircuit, CliffordTableau, Gate};
pub use pipeline::{EvalReport, TaskSpec};

pub type Model = neural::Model<f64>;
pub type ModelF32 = neural::Model<f32>;
pub type SetTransformerParams = neural::SetTransformerParams<f64>;
