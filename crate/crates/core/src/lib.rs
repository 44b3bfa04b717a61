//! Numerical laboratory for the HJMM forward-rate equation in weighted Lebesgue and
//! Sobolev spaces on the half line.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod ergodicity;
pub mod error;
pub mod finance;
pub mod noise;
pub mod semigroup;
pub mod solver;
pub mod stats;
pub mod weighted_spaces;

pub use error::{HjmmError, Result};
