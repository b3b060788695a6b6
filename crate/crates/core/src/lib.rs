//! Robust statistical process control: trimmed and winsorized univariate
//! charts, depth-trimmed multivariate charts with bootstrap limits, and a
//! Monte Carlo run-length harness.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod charts;
pub mod cli_io;
pub mod cloud;
pub mod depth;
pub mod error;
pub mod mv_robust;
pub mod robust_stats;
pub mod simulate;

pub use cloud::PointCloud;
pub use error::{Result, SpcError};
