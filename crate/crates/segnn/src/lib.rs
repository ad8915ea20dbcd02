//! Semi-supervised knowledge-graph entity alignment.
//!
//! Pipeline: semantic seed expansion, a two-branch local/global graph
//! encoder, margin-based training with RMSprop, threshold nearest-neighbor
//! seed correction, and Hits@K / MRR evaluation.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod kg;
pub mod lgam;
pub mod mat;
pub mod pipeline;
pub mod seedx;
pub mod sim;
pub mod tnecs;
pub mod train;

pub use error::{Result, SegnnError};
