// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod io;
pub mod numeric;
pub mod oracle;
pub mod specfun;
pub mod spectrum;

pub use error::{Error, Result};
