//! Distributionally robust optimization over a partitioned support with
//! optimal-transport ambiguity on the conditional distributions and order
//! cone constraints on the region probabilities.
//!
//! The pipeline: [`partition`] builds regions and the nominal distribution
//! from data, [`reformulate`] turns an [`model::Instance`] into a finite
//! convex program solved by [`program::solve`], [`oracle`] evaluates the
//! same worst case by brute force on finite supports, [`calibrate`] sizes
//! the ambiguity budgets and [`bench`] runs the comparative experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod calibrate;
pub mod cones;
pub mod error;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod program;
pub mod reformulate;

pub use error::{DroError, Result};
