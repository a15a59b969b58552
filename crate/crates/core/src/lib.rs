//! Stochastic analysis on discretized Poisson spaces.
//!
//! Poisson sampling on finite cell spaces, pathwise multiple Wiener–Itô
//! integrals, Malliavin difference operators, exact moments for polynomial
//! functionals of the counts, Stein-method distances and fourth-moment bound
//! evaluators, plus a reproducible Monte-Carlo harness.

pub mod bounds;
pub mod chaos;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod malliavin;
pub mod oracle;
pub mod rng;
pub mod space;
pub mod special;
pub mod stein;
pub mod stats;

pub use chaos::{ChaosFunctional, Functional};
pub use error::{Error, Result};
pub use kernels::{SymKernel, Tensor};
pub use space::{sample_poisson, DiscreteSpace, PointConfig};
pub use oracle::CountPolynomial;
