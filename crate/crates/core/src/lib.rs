#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha;
pub mod bench;
pub mod cli;
pub mod error;
pub mod foreground;
pub mod image;
pub mod laplacian;
pub mod operator;
pub mod solver;
pub mod sparse;

mod dense;

pub use error::{Error, Result};
