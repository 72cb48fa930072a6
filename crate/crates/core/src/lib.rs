//! Contact geometry, contact relative entropy, maximum-entropy equilibria and
//! topological pressure on explicit periodic contact manifolds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod entropy;
pub mod error;
pub mod expr;
pub mod fields;
pub mod flows;
pub mod geometry;
pub mod linalg;
pub mod maxent;
pub mod pressure;
pub mod report;
pub mod samples;

pub use error::{Error, Result};
