//! Covariant averaging of tensor fields with bilocal operators.
//!
//! The crate is `no_std` with `alloc`.

#![no_std]
// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod averaging;
pub mod bilocal;
pub mod catalog;
pub mod chart;
pub mod diff;
pub mod error;
pub mod fieldexpr;
pub mod frames;
pub mod linalg;
pub mod ode;
pub mod proper_coords;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};
pub use fieldexpr::{FieldExpr, Point};
