// Validation uses `!(x > 0.0)` so that NaN is rejected along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate_heat;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod harnack;
pub mod heat_kernel;
pub mod localization;
pub mod report;
pub mod ricci_flow;

pub use error::{LabError, Result};
