//! Change point detection in the causal mechanisms of discrete-valued
//! multivariate time series.
//!
//! The pipeline combines constraint-based causal discovery (a PCMCI-style
//! superset-parent search over non-overlapping intervals) with sliding-window
//! relative Pearson-divergence estimation on parent-configuration segments.
//! A synthetic mechanism-shift generator and a trial harness round out the
//! library so detection quality can be measured against ground truth.

pub mod citest;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod pcmci;
pub mod rulsif;
pub mod scm_gen;
pub mod segments;
pub mod svg;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
