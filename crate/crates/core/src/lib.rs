//! Data-driven LQR design from a single noisy trajectory.
//!
//! The crate covers the whole pipeline: a seeded plant simulator, the
//! model-based Riccati baseline, persistency-of-excitation checks, an LMI
//! interior-point solver, the certainty-equivalence and robustness-promoting
//! semidefinite programs, closed-form reference predictions, and a parallel
//! experiment driver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic_oracle;
pub mod conic;
pub mod ddd_sdp;
pub mod error;
pub mod excitation;
pub mod experiments;
pub mod linalg;
pub mod lqr_exact;
pub mod lti_lab;
pub mod report;

pub use error::{Error, Result};
