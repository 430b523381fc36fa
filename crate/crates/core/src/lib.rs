//! Condensed-space interior-point solver for sparse nonlinear programs.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: problems written as pattern blocks (instruction + data array).
//! * [`autodiff`]: per-pattern reverse-mode gradients, Jacobians and Hessians.
//! * [`sparse`]: AMD ordering and fixed-pivot sparse Cholesky / LDLᵀ refactorization.
//! * [`kkt`]: condensed KKT assembly, step recovery, inertia correction, iterative refinement.
//! * [`ipm`]: the interior-point loop with inequality relaxation and a filter line search.
//! * [`acopf`]: MATPOWER parsing and the polar AC optimal power flow model.
//! * [`bench`]: benchmark records, conditioning diagnostics and the `condopf` CLI.

// Index loops mirror the math; `!(a < b)` comparisons are NaN-aware on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod acopf;
pub mod autodiff;
pub mod bench;
pub mod ipm;
pub mod kkt;
pub mod model;
pub mod sparse;
