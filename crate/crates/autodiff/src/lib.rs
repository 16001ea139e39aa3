//! Reverse-mode automatic differentiation over dense row-major `f64`
//! arrays, sized for small recurrent and attention models.
//!
//! ```
//! use amberflag_autodiff::{Graph, ParamStore};
//!
//! let mut store = ParamStore::new();
//! let x = store.add("x", &[], vec![2.0]);
//! let y = store.add("y", &[], vec![3.0]);
//! let g = Graph::new();
//! let loss = g.param(&store, x).mul(g.param(&store, y)).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.param_grads(&store), vec![vec![3.0], vec![2.0]]);
//! ```

// Tensor arithmetic is fallible (shape checks), so it cannot use the std operator traits.
#![allow(clippy::should_implement_trait)]

mod adam;
mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
mod ops;
mod params;
mod shape;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use error::{AutodiffError, Result};
pub use graph::{Graph, Tensor};
pub use ops::{log_softplus, sigmoid, softplus};
pub use params::{Param, ParamId, ParamStore};
pub use shape::{broadcast_shape, numel};
