//! Fourier-series control optimization for a pendulum-driven capsule.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod fourier;
pub mod model;
pub mod optimizer;
pub mod parallel;
pub mod pipeline;
pub mod simulator;
pub mod tracking;
