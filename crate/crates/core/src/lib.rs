//! Simulation and stability certification for stochastic neural networks with
//! time-varying delays and Cox-process (doubly stochastic) switching.

// Negated comparisons are how NaN inputs get rejected; index loops mirror the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod certificates;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod switching;

pub use error::{Error, Result};
