// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod energy;
pub mod error;
pub mod frlap;
pub mod grid;
pub mod landscape;
pub mod laneemden;
pub mod quadrature;
pub mod stepper;

pub use error::{Error, Result};
