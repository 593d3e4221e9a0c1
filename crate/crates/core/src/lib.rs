//! Optimal linear response of finite-state Markov chains.
//!
//! A column-stochastic matrix `M` acts on probability vectors; its invariant
//! vector `h` responds to a perturbation `M + εm` at first order by `u₁`.
//! This crate computes `u₁` and the unit-norm perturbations `m` that maximize
//! three objectives: the Euclidean norm of `u₁`, the response of an
//! observable's expectation, and the decay rate of the second eigenvalue.
//! It also covers finite sequences of matrices and the Ulam discretization of
//! noisy one-dimensional maps.

pub mod basis;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod mixing;
pub mod norm;
pub mod response;
pub mod sequential;
pub mod sparse;
pub mod spectral;
pub mod stationary;
pub mod ulam;

pub use error::{Error, Result};
pub use markov::{StochasticMatrix, Support};
pub use response::{Perturbation, ResponseSolver};
pub use sparse::SparseMatrix;
