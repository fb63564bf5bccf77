//! Overlap receding-horizon control for linear systems with previewed
//! disturbances and time-varying stage costs.
//!
//! The crate is organised bottom-up:
//!
//! - [`linsys`]: dynamics `x' = A x + B u + w`, rollouts and the stacked
//!   (batch) prediction matrices.
//! - [`costs`]: stage-cost models, the state weight `sigma`, and the
//!   constants that parameterise the gain bounds.
//! - [`solver`]: the finite-horizon inner problem, closed form for quadratic
//!   costs and a quasi-Newton descent with adjoint gradients otherwise.
//! - [`policy`]: the interval schedule and the closed-loop overlap policy.
//! - [`bounds`]: closed-form gain constants, certificates and the
//!   interval value recursion audit.
//! - [`harness`]: scenario generation, policy comparison, the grid oracle
//!   and report emission.
//!
//! Data-parallel sweeps go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod costs;
pub mod error;
pub mod harness;
pub mod linsys;
pub mod par;
pub mod policy;
pub mod solver;

pub use error::{Error, Result};

/// Dense column vector used for states, inputs and disturbances.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
