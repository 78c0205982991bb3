#![no_std]
// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod data;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod rng;
pub mod stochastic;

pub use error::{Error, Result};
