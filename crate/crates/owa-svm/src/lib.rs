//! Soft-margin SVM training where the per-sample hinge deviations are
//! aggregated by an ordered weighted average instead of a plain sum.
//!
//! The crate provides:
//!
//! - [`data`]: CSV ingestion, label encoding, z-score standardization and
//!   stratified fold assignment.
//! - [`weights`]: position-weight vectors generated from linguistic
//!   quantifiers, their normalization and the ordered weighted sum itself.
//! - [`kernel`]: linear and Gaussian kernels with Gram-matrix assembly.
//! - [`qp`]: a sparse convex QP engine (operator splitting with
//!   equilibration and active-set polishing) plus a dense active-set
//!   reference solver, both producing verifiable KKT certificates.
//! - [`svm`]: the continuous trainers — the classical ℓ2 soft-margin dual,
//!   the ordered-weighted primal for non-decreasing weights, its dual/kernel
//!   form, the sum-of-k-largest reformulation used as a cross check, and the
//!   two-step reweighting heuristic.
//! - [`nonconvex`]: exact training for general (non-monotone) position
//!   weights via branch and bound on the assignment binaries, with big-M and
//!   bias-bound auxiliaries and a factorial brute-force oracle.
//! - [`eval`]: accuracy / balanced-accuracy metrics, cross validation, grid
//!   search and the rank-coincidence diagnostic.
//! - [`cli`]: the run configuration and dispatch used by the `owa-svm`
//!   binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod nonconvex;
pub mod qp;
pub mod svm;
pub mod weights;

pub use error::{Error, Result};
