//! Closed-form models behind the same contract: the exact Hawkes and
//! Poisson generators and a constant-intensity stub.

use std::sync::Arc;

use super::law::{ConditionalIntensity, NextEventLaw, TimeLaw};
use super::{IntensityModel, Result};
use crate::classical::{ClassicalError, HawkesParams, PoissonParams};
use crate::event::Event;

const HORIZON_GAPS: f64 = 20.0;

/// Time-invariant per-type rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantIntensity {
    rates: Vec<f64>,
}

impl ConstantIntensity {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }

    fn total(&self) -> f64 {
        self.rates.iter().sum()
    }
}

impl ConditionalIntensity for ConstantIntensity {
    fn num_types(&self) -> usize {
        self.rates.len()
    }

    fn rates_into(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.rates);
    }
}

fn constant_laws(rates: &[f64], events: &[Event], mean_gap: f64) -> Vec<NextEventLaw> {
    let total: f64 = rates.iter().sum();
    std::iter::once(0.0)
        .chain(events.iter().map(|e| e.t))
        .map(|t_last| NextEventLaw {
            t_last,
            horizon: HORIZON_GAPS * mean_gap,
            time: TimeLaw::Intensity(Box::new(ConstantIntensity::new(rates.to_vec()))),
            head_probs: Some(rates.iter().map(|r| r / total).collect()),
        })
        .collect()
}

impl IntensityModel for ConstantIntensity {
    fn name(&self) -> &str {
        "constant"
    }

    fn num_types(&self) -> usize {
        self.rates.len()
    }

    fn mean_gap(&self) -> f64 {
        1.0 / self.total()
    }

    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>> {
        Ok(constant_laws(&self.rates, events, self.mean_gap()))
    }
}

impl IntensityModel for PoissonParams {
    fn name(&self) -> &str {
        "poisson"
    }

    fn num_types(&self) -> usize {
        self.k()
    }

    fn mean_gap(&self) -> f64 {
        1.0 / self.mu.iter().sum::<f64>()
    }

    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>> {
        Ok(constant_laws(&self.mu, events, self.mean_gap()))
    }
}

/// Hawkes intensity after a fixed prefix. Every prefix event counts,
/// including one at the query time (right limit).
struct HawkesIntensity {
    params: Arc<HawkesParams>,
    history: Arc<[Event]>,
    len: usize,
}

impl ConditionalIntensity for HawkesIntensity {
    fn num_types(&self) -> usize {
        self.params.k()
    }

    fn rates_into(&self, t: f64, out: &mut [f64]) {
        let p = &self.params;
        out.copy_from_slice(&p.mu);
        for e in &self.history[..self.len] {
            let kernel = p.beta * (-p.beta * (t - e.t)).exp();
            for (k, o) in out.iter_mut().enumerate() {
                *o += p.alpha_at(k, e.k - 1) * kernel;
            }
        }
    }
}

impl IntensityModel for HawkesParams {
    fn name(&self) -> &str {
        "hawkes"
    }

    fn num_types(&self) -> usize {
        self.k()
    }

    fn mean_gap(&self) -> f64 {
        let total: f64 = self.stationary_rates().map(|r| r.iter().sum()).unwrap_or_else(|_| self.mu.iter().sum());
        1.0 / total
    }

    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>> {
        if let Some(e) = events.iter().find(|e| e.k == 0 || e.k > self.k()) {
            return Err(ClassicalError::UnknownType(e.k).into());
        }
        let params = Arc::new(self.clone());
        let history: Arc<[Event]> = events.into();
        let horizon = HORIZON_GAPS * self.mean_gap();
        Ok((0..=events.len())
            .map(|len| NextEventLaw {
                t_last: if len == 0 { 0.0 } else { events[len - 1].t },
                horizon,
                time: TimeLaw::Intensity(Box::new(HawkesIntensity {
                    params: params.clone(),
                    history: history.clone(),
                    len,
                })),
                head_probs: None,
            })
            .collect())
    }
}
