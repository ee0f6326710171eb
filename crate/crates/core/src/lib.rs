//! Numerical core of a graph-augmented probabilistic demand forecaster.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (an allocator is required). File formats, the
//! command line and wall-clock timing live in the `graphdeepar` crate.
//!
//! The pipeline, module by module:
//!
//! - [`dataset`]: panel data, static feature encoding, time splits, windows
//! - [`synthetic`]: clustered synthetic panels with a known graph structure
//! - [`graph`]: cosine-similarity article graph, neighbour sampling, node features
//! - [`encoder`]: mean-aggregation graph convolution shared across window steps
//! - [`decoder`]: autoregressive LSTM decoder with a Student-t head
//! - [`trainer`]: batch samplers, optimisers, early stopping
//! - [`metrics`]: accuracy metrics, group reports, financial loss
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod batching;
pub mod dataset;
pub mod decoder;
pub mod encoder;
mod error;
pub mod graph;
pub mod lstm;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod projection;
pub mod student_t;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
