//! Meta-learners for conditional average treatment effects.
//!
//! The crate estimates `tau(x) = E(Y^1 - Y^0 | X = x)` from observational
//! data with binary treatment. It provides:
//!
//! * [`learners`]: the plug-in (T), X, IPW and doubly robust (DR) learners,
//!   and a local polynomial R-Learner with double sample splitting;
//! * [`smoothers`]: local polynomial regression, a cubic smoothing spline
//!   and a cross-validated lasso, used for nuisances and second stages;
//! * [`pseudo`]: pseudo-outcomes and the doubly robust error function;
//! * [`dgp`]: two simulation designs with known truth;
//! * [`harness`]: Monte-Carlo experiments and their summaries.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod learners;
pub mod math;
pub mod pseudo;
pub mod smoothers;

pub use error::{Error, Result};
