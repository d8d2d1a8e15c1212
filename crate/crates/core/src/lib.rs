//! Computational tools for projections of self-similar and graph-directed
//! fractals.
//!
//! The crate builds attractor point clouds from iterated function systems
//! ([`ifs`]), samples and packs the Grassmannian of `k`-planes in `R^n`
//! ([`grassmannian`]), estimates box-counting and Hausdorff-content quantities
//! ([`dimension`]), runs projection sweeps, fat-plane energy counts and
//! exceptional-direction counts over direction nets ([`sweep`]), and checks the
//! transversality of the hyperplane-projected family of a rotation-free IFS
//! ([`transversality`]).
//!
//! Everything here is pure computation on `alloc` types; file formats, CSV and
//! the command line live in the companion `dimcons` crate.
#![no_std]
#![warn(missing_docs)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "parallel")]
extern crate std;

pub mod dimension;
mod error;
pub mod fit;
pub mod grassmannian;
pub mod ifs;
pub mod linalg;
pub mod rng;
pub mod sweep;
pub mod transversality;

pub use error::{Error, Result};
