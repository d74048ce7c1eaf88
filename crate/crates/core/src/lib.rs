// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cert;
pub mod cli;
pub mod controller;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod memory;
pub mod network;
pub mod numerics;

pub use error::{Error, Result};
pub use nalgebra;
