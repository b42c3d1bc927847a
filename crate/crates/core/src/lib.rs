//! Semigroup-adapted Morrey and Campanato norms on uniform grids.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod dirichlet;
pub mod error;
pub mod exec;
pub mod grid;
pub mod io;
pub mod limits;
pub mod norms;
pub mod potentials;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
