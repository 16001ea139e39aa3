//! Temporal point process toolkit for clinical amber-flag event streams.
//!
//! Event data structures, classical Hawkes and Poisson baselines, neural
//! intensity and density models, training, evaluation, and the ingest path
//! from raw vital-sign readings to event sequences.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classical;
pub mod evaluation;
pub mod event;
pub mod ingest;
pub mod io;
pub mod models;
pub mod seeds;
pub mod training;

pub use classical::{ClassicalError, HawkesParams, PoissonParams};
pub use event::{Event, EventError, EventSequence, EventTypeCatalog, PaddedBatch, SplitDataset, SplitRatios, PAD_ID};
