//! Exchangeable-sampling e-values and e-processes for goodness-of-fit
//! testing against unnormalized models.
//!
//! A test statistic `T` is evaluated on the observed data `x` and on `M`
//! draws that are jointly exchangeable with `x` under the null. Draws come
//! from running a reversible Markov kernel `J` steps backward from `x` to an
//! anchor and then `J` steps forward, `M` times, from the anchor.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eprocess;
pub mod error;
pub mod evalues;
pub mod exchangeable;
pub mod kernels;
pub mod math;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod statistic;
pub mod studies;

pub use error::{Error, Result};
