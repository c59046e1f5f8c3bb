//! Few-shot point cloud segmentation that stays robust to noisy support sets.
//!
//! Training adds a component-level contrastive term that pulls clean support
//! shots together and pushes mislabeled ones away; inference filters support
//! shots by their degree in a multi-scale feature affinity graph before
//! building prototypes and propagating labels to the query points.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embed;
pub mod error;
pub mod fewshot;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod losses;
pub mod mdns;
pub mod sampling;
pub mod scalar;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::*;
