// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha1d;
pub mod ballbodies;
pub mod bodies;
pub mod cli;
pub mod combinatorics;
pub mod covariogram;
pub mod error;
pub mod numerics;
pub mod report;
pub mod verifier;

pub use error::{Error, Result};
pub use report::VerificationReport;
