#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod fields;

pub use error::{Error, Result};
pub mod atr;
pub mod experiments;
pub mod landweber;
pub mod measurement;
pub mod spectral;
pub mod wave;
