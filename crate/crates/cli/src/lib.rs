//! Experiment harness around `campanato-core`: TOML configs, a deterministic
//! test corpus, the experiment runners and report emission.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod harness;
pub mod report;
