//! The common contract for next-event models and the per-position laws they
//! expose.
//!
//! A model maps an event prefix to a [`NextEventLaw`]: the distribution of
//! the next event's time and type. Intensity-based models describe time
//! through per-type conditional intensities; the intensity-free model
//! through a normalized log-normal mixture over the gap.

mod baselines;
mod law;
pub mod math;
mod neural;

use thiserror::Error;

use crate::event::Event;

pub use baselines::ConstantIntensity;
pub use law::{argmax_type, ConditionalIntensity, LogNormalMixture, NextEventLaw, NextEventPrediction, Quadrature, TimeLaw, TypeRule};
pub use neural::{Encoded, McDraws, ModelConfig, ModelKind, NeuralModel, NllTerms, MODEL_CHECKPOINT_FORMAT};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("the intensity-free model exposes a density, not an intensity")]
    UnsupportedForIF,
    #[error("inter-event gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("more than 1% of the next-event mass lies beyond {horizon} hours after the last event")]
    QuadratureOverflow { horizon: f64 },
    #[error("query time {query} is not after the last event at {last}")]
    QueryBeforeLastEvent { query: f64, last: f64 },
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Autodiff(#[from] amberflag_autodiff::AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] amberflag_autodiff::CheckpointError),
    #[error(transparent)]
    Classical(#[from] crate::classical::ClassicalError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Anything that yields a next-event law for every prefix of a sequence.
pub trait IntensityModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of real event types; ids run `1..=num_types`.
    fn num_types(&self) -> usize;

    /// Typical inter-event gap in hours. The expected-time quadrature is
    /// truncated at twenty times this value.
    fn mean_gap(&self) -> f64;

    /// `events.len() + 1` laws; entry `i` conditions on the first `i` events.
    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>>;

    /// The law after each full prefix. Models may override this to batch.
    fn last_laws(&self, prefixes: &[&[Event]]) -> Result<Vec<NextEventLaw>> {
        prefixes
            .iter()
            .map(|p| {
                self.next_event_laws(p)
                    .map(|mut laws| laws.pop().expect("at least one law per prefix"))
            })
            .collect()
    }
}

impl<M: IntensityModel + ?Sized> IntensityModel for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn num_types(&self) -> usize {
        (**self).num_types()
    }
    fn mean_gap(&self) -> f64 {
        (**self).mean_gap()
    }
    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>> {
        (**self).next_event_laws(events)
    }
    fn last_laws(&self, prefixes: &[&[Event]]) -> Result<Vec<NextEventLaw>> {
        (**self).last_laws(prefixes)
    }
}
