//! Approximate nearest neighbor search that stays accurate when queries
//! come from a different distribution than the indexed data.
//!
//! * [`graph`]: Vamana and RobustVamana graph construction and greedy search.
//! * [`quant`]: product quantization (PQ, OPQ) and the query-aware variants
//!   APQ and AOPQ.
//! * [`layout`]: sector packing (ParallelGorder) and a sector-read counting
//!   beam search.
//! * [`diagnostics`]: distribution-shift measurements between query sets.
//! * [`synth`]: seeded synthetic workloads with in- and out-of-distribution
//!   query sets.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod layout;
pub mod par;
pub mod quant;
pub mod synth;

pub use data::{Metric, VectorDataset};
pub use error::{Error, Result};
