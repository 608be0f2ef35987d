//! Numerics for the log-gamma directed polymer.
//!
//! * [`specfun`]: complex log-gamma, digamma, polygamma and Airy functions.
//! * [`weights`]: disorder families, their moments, and moment matching.
//! * [`polymer`]: partition functions by lattice dynamic programming, Gibbs
//!   diagnostics, and seeded Monte Carlo ensembles.
//! * [`fredholm`]: contour kernels and Nyström Fredholm determinants for the
//!   Laplace transform of the partition function and for `F_GUE`.
//! * [`stats`]: Kolmogorov-Smirnov statistics.

pub mod fredholm;
pub mod parallel;
pub mod polymer;
pub mod quadrature;
pub mod rng;
pub mod specfun;
pub mod stats;
pub mod weights;

pub use specfun::ComplexPoint;
