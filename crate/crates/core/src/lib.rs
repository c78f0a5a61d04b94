//! Least-squares finite element solvers for scalar linear advection-reaction
//! equations on the unit square.
//!
//! The library builds conforming triangulations that resolve a piecewise
//! absorption coefficient, assembles the mixed least-squares systems coupling
//! a trial space `U` with an auxiliary adjoint-domain space `Z`, and solves
//! them with four related methods:
//!
//! * the dual (negative-norm) method driven by the saddle-point block system,
//! * the classical adjoint least-squares solve on `Z` alone,
//! * the two-stage variant (adjoint solve followed by an `L2` projection),
//! * the single-stage variant (weighted combined minimization, weight `omega`).
//!
//! Block preconditioners for the saddle-point and combined systems, inf-sup
//! diagnostics, and a convergence-study harness are included.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod methods;
pub mod problem;
pub mod quadrature;
pub mod space;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
