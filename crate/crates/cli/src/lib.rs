//! Experiment driver for `dimcons-core`: system files, experiment
//! configuration, CSV tables and SVG charts.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod system;
