//! Sparse oblivious and leverage-adapted subspace embeddings.

pub mod apply;
pub mod calibration;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod kwise;
pub mod less;
pub mod leverage;
pub mod matrix;
pub mod mtx;
pub mod oblivious;
pub mod pipeline;
pub mod sketch;

pub use error::{Error, Result};
