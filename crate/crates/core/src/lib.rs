#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod fit;
pub mod hr_core;
pub mod io;
pub mod kernels;
pub mod margins;
pub mod linalg;
pub mod mvn;
pub mod network;
pub mod normal;
pub mod optim;
pub mod risk;
pub mod simulate;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
