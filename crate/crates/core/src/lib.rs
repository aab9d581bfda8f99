#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channels;
pub mod dd;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod lfc;
pub mod mllfc;
pub mod ol;
pub mod par;
pub mod regions;
pub mod stats;

pub use error::{Error, Result};
