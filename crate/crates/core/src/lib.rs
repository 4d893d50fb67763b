//! NaN inputs are rejected with negated comparisons such as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod densities;
pub mod error;
pub mod fields;
pub mod kde;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod schedule;
pub mod special;
pub mod stats;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
