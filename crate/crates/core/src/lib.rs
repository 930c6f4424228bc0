// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Series coefficients are kept at the precision they were published with.
#![allow(clippy::excessive_precision)]

pub mod adversary;
pub mod config;
pub mod effdim;
pub mod error;
pub mod ewa;
pub mod experiments;
pub mod harness;
pub mod kaar;
pub mod kernel;
pub mod linalg;
pub mod output;
pub mod rng;
pub mod special_fn;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
