//! Learned coding-unit partition prediction for quad-tree video coding.
//!
//! The crate is split along the pipeline:
//!
//! * [`nn`]: a small deterministic neural-network kernel set (tensors,
//!   non-overlapping convolution, bias-free dense layers, dropout, masked
//!   cross-entropy, SGD with momentum, finite-difference gradient checks).
//! * [`hcpm`]: the hierarchical CU partition map (1 + 4 + 16 ternary labels)
//!   and its quad-tree / threshold machinery.
//! * [`codec`]: a toy quad-tree encoder: DC-prediction cost model, the
//!   exhaustive RDO oracle, residue pre-coding and prediction-guided encoding.
//! * [`cnn`] / [`lstm`]: the early-terminated hierarchical CNN and LSTM.
//! * [`dataset`]: synthetic sources, oracle-labelled CTU databases, splits.
//! * [`eval`]: evaluation, threshold sweeps, benchmarks and table checks.

pub mod cnn;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hcpm;
pub mod lstm;
pub mod model_io;
pub mod nn;

pub use error::{Error, Result};

/// Default quantization parameters used for database building and evaluation.
pub const DEFAULT_QPS: [u8; 4] = [22, 27, 32, 37];

/// Edge of a coding tree unit in luma samples.
pub const CTU_SIZE: usize = 64;
