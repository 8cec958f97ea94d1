//! Link-level simulator for ambient backscatter with polarization-reconfigurable tags.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod output;
pub mod polarization;
pub mod seed;
pub mod tag;

pub use error::{Error, Result};
