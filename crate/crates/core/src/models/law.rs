use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::math::{log_normal_pdf, log_normal_sf, log_sum_exp};
use super::{ModelError, Result};
use crate::event::Event;

/// Grid points of the expected-time quadrature.
pub const QUADRATURE_POINTS: usize = 200;
/// Grid points after the single widening step.
const WIDE_POINTS: usize = 1000;
const WIDEN_FACTOR: f64 = 5.0;
/// Survival mass allowed beyond the truncation horizon.
const MAX_TAIL_MASS: f64 = 0.01;
/// Mixture draws beyond the widened horizon are redrawn this many times,
/// then clamped.
const MAX_REDRAWS: usize = 100;
/// Floor for observed gaps entering a density.
pub const MIN_GAP: f64 = 1e-9;

/// Per-type conditional intensity after a fixed history.
pub trait ConditionalIntensity: Send + Sync {
    fn num_types(&self) -> usize;

    /// Rates at absolute time `t` at or after the last history event
    /// (right limit at the event itself).
    fn rates_into(&self, t: f64, out: &mut [f64]);

    fn rates(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_types()];
        self.rates_into(t, &mut out);
        out
    }
}

/// Mixture of log-normals over the gap: `log τ ~ Σ w_m N(loc_m, scale_m²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalMixture {
    pub log_weights: Vec<f64>,
    pub locs: Vec<f64>,
    pub scales: Vec<f64>,
}

impl LogNormalMixture {
    /// Weights are normalized here; scales must be positive.
    pub fn new(log_weights: Vec<f64>, locs: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let m = log_weights.len();
        if m == 0 || locs.len() != m || scales.len() != m || scales.iter().any(|&s| !(s > 0.0)) {
            return Err(ModelError::ConfigMismatch("mixture needs M >= 1 matching positive scales".into()));
        }
        let lse = log_sum_exp(&log_weights);
        Ok(Self {
            log_weights: log_weights.iter().map(|w| w - lse).collect(),
            locs,
            scales,
        })
    }

    pub fn log_density(&self, gap: f64) -> Result<f64> {
        if !(gap > 0.0) {
            return Err(ModelError::NonPositiveGap(gap));
        }
        let y = gap.ln();
        let terms: Vec<f64> = (0..self.locs.len())
            .map(|m| self.log_weights[m] + log_normal_pdf((y - self.locs[m]) / self.scales[m]) - self.scales[m].ln())
            .collect();
        Ok(log_sum_exp(&terms) - y)
    }

    pub fn log_survival(&self, gap: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        let y = gap.ln();
        let terms: Vec<f64> = (0..self.locs.len())
            .map(|m| self.log_weights[m] + log_normal_sf((y - self.locs[m]) / self.scales[m]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn mean(&self) -> f64 {
        (0..self.locs.len())
            .map(|m| (self.log_weights[m] + self.locs[m] + 0.5 * self.scales[m] * self.scales[m]).exp())
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        let mut pick = self.locs.len() - 1;
        for (m, lw) in self.log_weights.iter().enumerate() {
            let w = lw.exp();
            if u < w {
                pick = m;
                break;
            }
            u -= w;
        }
        let z: f64 = StandardNormal.sample(rng);
        (self.locs[pick] + self.scales[pick] * z).exp()
    }
}

/// How the law describes the time of the next event.
pub enum TimeLaw {
    Intensity(Box<dyn ConditionalIntensity>),
    Density(LogNormalMixture),
    /// The next event is exactly this many hours after the last one.
    PointMass(f64),
}

/// Which distribution picks the predicted type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TypeRule {
    /// The classification head (falls back to intensities when absent).
    #[default]
    Head,
    /// Competing-risks probabilities `∫ λ_k S dt` from the intensities.
    IntensityArgmax,
}

/// Distribution of the next event given a history ending at `t_last`.
pub struct NextEventLaw {
    pub t_last: f64,
    /// Truncation width of the expected-time quadrature, in hours.
    pub horizon: f64,
    pub time: TimeLaw,
    pub head_probs: Option<Vec<f64>>,
}

/// Trapezoid grid over `[t_last, t_last + horizon]`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub times: Vec<f64>,
    /// `times.len() x K`, row-major.
    pub type_rates: Vec<f64>,
    pub total_rate: Vec<f64>,
    pub cum_hazard: Vec<f64>,
    pub horizon: f64,
}

impl Quadrature {
    fn build(f: &dyn ConditionalIntensity, t_last: f64, horizon: f64, points: usize) -> Self {
        let k = f.num_types();
        let mut times = Vec::with_capacity(points);
        let mut type_rates = vec![0.0; points * k];
        let mut total_rate = Vec::with_capacity(points);
        let mut cum_hazard = Vec::with_capacity(points);
        for j in 0..points {
            let t = t_last + horizon * j as f64 / (points - 1) as f64;
            let row = &mut type_rates[j * k..(j + 1) * k];
            f.rates_into(t, row);
            let total: f64 = row.iter().sum();
            let cum = match j {
                0 => 0.0,
                _ => cum_hazard[j - 1] + 0.5 * (t - times[j - 1]) * (total + total_rate[j - 1]),
            };
            times.push(t);
            total_rate.push(total);
            cum_hazard.push(cum);
        }
        Self {
            times,
            type_rates,
            total_rate,
            cum_hazard,
            horizon,
        }
    }

    pub fn tail_mass(&self) -> f64 {
        (-self.cum_hazard.last().copied().unwrap_or(0.0)).exp()
    }

    pub fn density(&self) -> Vec<f64> {
        self.total_rate.iter().zip(&self.cum_hazard).map(|(l, c)| l * (-c).exp()).collect()
    }

    fn trapezoid(&self, f: impl Fn(usize) -> f64) -> f64 {
        (1..self.times.len())
            .map(|j| 0.5 * (self.times[j] - self.times[j - 1]) * (f(j) + f(j - 1)))
            .sum()
    }

    /// Expected gap under the density, normalized by the captured mass.
    pub fn expected_gap(&self) -> f64 {
        let p = self.density();
        let t0 = self.times[0];
        let mass = self.trapezoid(|j| p[j]);
        self.trapezoid(|j| (self.times[j] - t0) * p[j]) / mass
    }

    /// Competing-risks type probabilities `∫ λ_k S dt`, normalized.
    pub fn type_probs(&self) -> Vec<f64> {
        let k = self.type_rates.len() / self.times.len();
        let surv: Vec<f64> = self.cum_hazard.iter().map(|c| (-c).exp()).collect();
        let raw: Vec<f64> = (0..k).map(|kk| self.trapezoid(|j| self.type_rates[j * k + kk] * surv[j])).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }

    /// Inverse-CDF draw of the next time, restricted to the grid.
    pub fn sample_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let captured = 1.0 - self.tail_mass();
        let u: f64 = rng.random();
        let target = -(1.0 - u * captured).ln();
        let j = self.cum_hazard.partition_point(|&c| c < target).clamp(1, self.times.len() - 1);
        let (c0, c1) = (self.cum_hazard[j - 1], self.cum_hazard[j]);
        let frac = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.times[j - 1] + frac * (self.times[j] - self.times[j - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextEventPrediction {
    pub t_last: f64,
    pub t_next: f64,
    pub type_probs: Vec<f64>,
}

impl NextEventPrediction {
    /// Argmax of `type_probs` as a 1-based id; ties go to the lowest id.
    pub fn predicted_type(&self) -> usize {
        argmax_type(&self.type_probs)
    }
}

/// Argmax of a type distribution as a 1-based id; ties go to the lowest id.
pub fn argmax_type(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best + 1
}

fn draw_type<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i + 1;
        }
        u -= p;
    }
    // rounding left a sliver of mass; give it to the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1) + 1
}

impl NextEventLaw {
    fn intensity(&self) -> Result<&dyn ConditionalIntensity> {
        match &self.time {
            TimeLaw::Intensity(f) => Ok(f.as_ref()),
            _ => Err(ModelError::UnsupportedForIF),
        }
    }

    fn check_query(&self, t: f64) -> Result<()> {
        if t < self.t_last {
            Err(ModelError::QueryBeforeLastEvent { query: t, last: self.t_last })
        } else {
            Ok(())
        }
    }

    pub fn rates(&self, t: f64) -> Result<Vec<f64>> {
        self.check_query(t)?;
        Ok(self.intensity()?.rates(t))
    }

    /// Rate of type `k` (1-based) at time `t`.
    pub fn intensity_at(&self, t: f64, k: usize) -> Result<f64> {
        let rates = self.rates(t)?;
        rates
            .get(k.wrapping_sub(1))
            .copied()
            .ok_or_else(|| ModelError::ConfigMismatch(format!("type {k} outside 1..={}", rates.len())))
    }

    pub fn total_rate(&self, t: f64) -> Result<f64> {
        Ok(self.rates(t)?.iter().sum())
    }

    /// Log of the event part of the likelihood for an event `(t, k)`:
    /// `log λ_k(t)` for intensities, `log f(gap) + log p(k)` for densities.
    pub fn log_event_term(&self, t: f64, k: usize) -> Result<f64> {
        match &self.time {
            TimeLaw::Intensity(_) => Ok(self.intensity_at(t, k)?.ln()),
            TimeLaw::Density(mix) => {
                let probs = self.head_probs.as_ref().ok_or(ModelError::ConfigMismatch("density law without type head".into()))?;
                let p = probs
                    .get(k.wrapping_sub(1))
                    .ok_or_else(|| ModelError::ConfigMismatch(format!("type {k} outside 1..={}", probs.len())))?;
                self.check_query(t)?;
                // an event at the same instant as the last one sits on the gap floor
                Ok(mix.log_density((t - self.t_last).max(MIN_GAP))? + p.ln())
            }
            TimeLaw::PointMass(_) => Err(ModelError::UnsupportedForIF),
        }
    }

    /// Trapezoid grid for intensity laws, widened once if more than 1% of
    /// the mass lies beyond the horizon.
    pub fn quadrature(&self) -> Result<Quadrature> {
        let f = self.intensity()?;
        let q = Quadrature::build(f, self.t_last, self.horizon, QUADRATURE_POINTS);
        if q.tail_mass() <= MAX_TAIL_MASS {
            return Ok(q);
        }
        let wide = self.horizon * WIDEN_FACTOR;
        let q = Quadrature::build(f, self.t_last, wide, WIDE_POINTS);
        if q.tail_mass() <= MAX_TAIL_MASS {
            Ok(q)
        } else {
            Err(ModelError::QuadratureOverflow { horizon: wide })
        }
    }

    /// Grid for drawing times. A defective law (mass leaking past the
    /// widened horizon) is sampled conditional on an event inside it.
    fn sampling_quadrature(&self) -> Result<Quadrature> {
        match self.quadrature() {
            Err(ModelError::QuadratureOverflow { .. }) => Ok(Quadrature::build(
                self.intensity()?,
                self.t_last,
                self.horizon * WIDEN_FACTOR,
                WIDE_POINTS,
            )),
            other => other,
        }
    }

    fn type_probs_with(&self, rule: TypeRule, quad: Option<&Quadrature>) -> Result<Vec<f64>> {
        let head = self.head_probs.clone();
        let competing = quad.map(Quadrature::type_probs);
        let picked = match rule {
            TypeRule::Head => head.or(competing),
            TypeRule::IntensityArgmax => competing.or(head),
        };
        picked.ok_or(ModelError::ConfigMismatch("law has no type distribution".into()))
    }

    /// Type distribution alone. Skips the time quadrature whenever the rule
    /// can be answered by the head.
    pub fn type_probs(&self, rule: TypeRule) -> Result<Vec<f64>> {
        match (&self.time, rule, &self.head_probs) {
            (TimeLaw::Intensity(_), TypeRule::Head, None) | (TimeLaw::Intensity(_), TypeRule::IntensityArgmax, _) => {
                self.type_probs_with(rule, Some(&self.quadrature()?))
            }
            _ => self.type_probs_with(rule, None),
        }
    }

    pub fn predict(&self, rule: TypeRule) -> Result<NextEventPrediction> {
        let (gap, quad) = match &self.time {
            TimeLaw::Intensity(_) => {
                let q = self.quadrature()?;
                (q.expected_gap(), Some(q))
            }
            TimeLaw::Density(mix) => (mix.mean(), None),
            TimeLaw::PointMass(g) => (*g, None),
        };
        Ok(NextEventPrediction {
            t_last: self.t_last,
            t_next: self.t_last + gap,
            type_probs: self.type_probs_with(rule, quad.as_ref())?,
        })
    }

    /// One draw of the next event: time by inverse CDF (or from the
    /// mixture, redrawn past the widened horizon), type from the rule's type
    /// distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rule: TypeRule, rng: &mut R) -> Result<Event> {
        match &self.time {
            TimeLaw::Intensity(_) => {
                let q = self.sampling_quadrature()?;
                let probs = self.type_probs_with(rule, Some(&q))?;
                let t = q.sample_time(rng);
                Ok(Event::new(t, draw_type(&probs, rng)))
            }
            TimeLaw::Density(mix) => {
                let probs = self.type_probs_with(rule, None)?;
                // Same support as the intensity path: the widened horizon.
                let cap = self.horizon * WIDEN_FACTOR;
                let mut gap = mix.sample(rng);
                for _ in 0..MAX_REDRAWS {
                    if gap <= cap {
                        break;
                    }
                    gap = mix.sample(rng);
                }
                let gap = gap.min(cap);
                Ok(Event::new(self.t_last + gap, draw_type(&probs, rng)))
            }
            TimeLaw::PointMass(g) => {
                let probs = self.type_probs_with(rule, None)?;
                Ok(Event::new(self.t_last + g, draw_type(&probs, rng)))
            }
        }
    }
}
