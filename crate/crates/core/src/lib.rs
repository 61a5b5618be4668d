#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod image_update;
pub mod io;
mod linalg;
pub mod measurements;
pub mod metrics;
pub mod patches;
pub mod rng;
pub mod solver;
pub mod sparse_coding;

pub use error::{Error, Result};
