//! Functional linear regression, its exactly and asymptotically equivalent
//! white-noise models, and sharp-minimax Pinsker estimation.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covariance;
pub mod design;
pub mod equivalence;
pub mod error;
pub mod estimators;
pub mod function_space;
pub mod plot;
pub mod risk;
pub mod rng;
pub mod stats;
pub mod whitenoise;

pub use error::{Error, Result};
