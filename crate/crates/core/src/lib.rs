//! Ultra-local-model fault estimators for nonlinear systems.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod augment;
pub mod error;
pub mod matlib;
pub mod lmi;
pub mod model;
pub mod sdp;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
