//! Classical point processes: homogeneous Poisson and multivariate Hawkes
//! with a shared exponential kernel.
//!
//! The Hawkes intensity of type `k` is
//!
//! ```text
//! λ_k(t) = μ_k + Σ_{t_j < t} α[k][k_j] · β · exp(−β (t − t_j))
//! ```
//!
//! so `α[k][j]` is the expected number of type-`k` children of one type-`j`
//! event and the process is sub-critical when the spectral radius of `α`
//! is below one. Both processes double as exact likelihood oracles and as
//! synthetic data generators.

use std::path::Path;

use amberflag_autodiff::{AdamState, Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventSequence, EventTypeCatalog, PaddedBatch};

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("history contains an event at {event} after the query time {query}")]
    HistoryAfterQuery { event: f64, query: f64 },
    #[error("process is not sub-critical: max row sum of alpha is {0}")]
    NotStationary(f64),
    #[error("simulation exceeded {0} events")]
    ExplosionGuard(usize),
    #[error("log-likelihood is not finite")]
    NonFiniteLoss,
    #[error("no sequences to fit")]
    NoData,
    #[error("event type {0} outside 1..=K")]
    UnknownType(usize),
    #[error("parameter file {path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Autodiff(#[from] amberflag_autodiff::AutodiffError),
}

/// Simulation stops with [`ClassicalError::ExplosionGuard`] past this count.
pub const MAX_SIMULATED_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    pub mu: Vec<f64>,
}

impl PoissonParams {
    pub fn new(mu: Vec<f64>) -> Result<Self, ClassicalError> {
        if mu.is_empty() || mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(ClassicalError::InvalidParams(format!("rates must be positive: {mu:?}")));
        }
        Ok(Self { mu })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    /// Maximum-likelihood rates: per-type counts over total observed time.
    /// Types never observed get a tiny positive floor.
    pub fn fit(seqs: &[EventSequence], k: usize) -> Result<Self, ClassicalError> {
        let total_time: f64 = seqs.iter().map(|s| s.t_obs).sum();
        if seqs.is_empty() || total_time <= 0.0 {
            return Err(ClassicalError::NoData);
        }
        let mut counts = vec![0.0; k];
        for e in seqs.iter().flat_map(|s| &s.events) {
            *counts.get_mut(e.k.wrapping_sub(1)).ok_or(ClassicalError::UnknownType(e.k))? += 1.0;
        }
        Self::new(counts.iter().map(|c| (c / total_time).max(1e-12)).collect())
    }

    pub fn loglik(&self, seq: &EventSequence) -> Result<f64, ClassicalError> {
        let mut ll = 0.0;
        for e in &seq.events {
            ll += self.mu.get(e.k.wrapping_sub(1)).ok_or(ClassicalError::UnknownType(e.k))?.ln();
        }
        Ok(ll - self.mu.iter().sum::<f64>() * seq.t_obs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    pub mu: Vec<f64>,
    /// Row-major `K x K`; `alpha[k * K + j]` is the excitation of `k` by `j`.
    pub alpha: Vec<f64>,
    pub beta: f64,
}

#[derive(Serialize, Deserialize)]
struct HawkesFile {
    #[serde(rename = "K")]
    k: usize,
    mu: Vec<f64>,
    alpha: Vec<f64>,
    beta: f64,
}

impl HawkesParams {
    pub fn new(mu: Vec<f64>, alpha: Vec<f64>, beta: f64) -> Result<Self, ClassicalError> {
        let k = mu.len();
        if k == 0 || alpha.len() != k * k {
            return Err(ClassicalError::InvalidParams(format!("need K >= 1 and K*K alpha entries, got K={k}, {}", alpha.len())));
        }
        if mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(ClassicalError::InvalidParams("mu must be positive".into()));
        }
        if alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(ClassicalError::InvalidParams("alpha must be non-negative".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ClassicalError::InvalidParams("beta must be positive".into()));
        }
        Ok(Self { mu, alpha, beta })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn alpha_at(&self, k: usize, j: usize) -> f64 {
        self.alpha[k * self.k() + j]
    }

    pub fn max_row_sum(&self) -> f64 {
        self.alpha.chunks(self.k()).map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max)
    }

    /// Sub-criticality guard: every row of `alpha` sums to less than one,
    /// which bounds its spectral radius below one.
    pub fn check_stationary(&self) -> Result<(), ClassicalError> {
        let r = self.max_row_sum();
        if r < 1.0 {
            Ok(())
        } else {
            Err(ClassicalError::NotStationary(r))
        }
    }

    /// Stationary mean rates `(I − α)^{-1} μ`.
    pub fn stationary_rates(&self) -> Result<Vec<f64>, ClassicalError> {
        self.check_stationary()?;
        let k = self.k();
        let mut m: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                let mut row: Vec<f64> = (0..k).map(|c| f64::from(u8::from(r == c)) - self.alpha_at(r, c)).collect();
                row.push(self.mu[r]);
                row
            })
            .collect();
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap_or(col);
            m.swap(col, pivot);
            let p = m[col][col];
            for row in 0..k {
                if row != col {
                    let f = m[row][col] / p;
                    for c in col..=k {
                        m[row][c] -= f * m[col][c];
                    }
                }
            }
        }
        Ok((0..k).map(|r| m[r][k] / m[r][r]).collect())
    }

    /// Expected per-type counts on `[0, t_end]` starting from an empty
    /// history. Integrates `dx/dt = −β x + β α (μ + x)` for the mean
    /// excitation `x` with RK4.
    pub fn expected_counts(&self, t_end: f64) -> Vec<f64> {
        let k = self.k();
        let steps = ((t_end * self.beta * 200.0).ceil() as usize).max(1000);
        let h = t_end / steps as f64;
        let deriv = |x: &[f64]| -> Vec<f64> {
            (0..k)
                .map(|r| {
                    let drive: f64 = (0..k).map(|c| self.alpha_at(r, c) * (self.mu[c] + x[c])).sum();
                    self.beta * (drive - x[r])
                })
                .collect()
        };
        let mut x = vec![0.0; k];
        let mut counts = vec![0.0; k];
        for _ in 0..steps {
            let k1 = deriv(&x);
            let x2: Vec<f64> = (0..k).map(|i| x[i] + 0.5 * h * k1[i]).collect();
            let k2 = deriv(&x2);
            let x3: Vec<f64> = (0..k).map(|i| x[i] + 0.5 * h * k2[i]).collect();
            let k3 = deriv(&x3);
            let x4: Vec<f64> = (0..k).map(|i| x[i] + h * k3[i]).collect();
            let k4 = deriv(&x4);
            for i in 0..k {
                // Simpson on the rate over the step, consistent with RK4
                counts[i] += h / 6.0 * ((self.mu[i] + x[i]) + 2.0 * (self.mu[i] + x2[i]) + 2.0 * (self.mu[i] + x3[i]) + (self.mu[i] + x4[i]));
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        counts
    }

    pub fn to_toml(&self) -> String {
        let file = HawkesFile {
            k: self.k(),
            mu: self.mu.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta,
        };
        toml::to_string(&file).expect("hawkes parameters serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, ClassicalError> {
        let f: HawkesFile = toml::from_str(text).map_err(|e| ClassicalError::InvalidParams(e.to_string()))?;
        if f.mu.len() != f.k {
            return Err(ClassicalError::InvalidParams(format!("K = {} but {} base rates", f.k, f.mu.len())));
        }
        Self::new(f.mu, f.alpha, f.beta)
    }

    pub fn load(path: &Path) -> Result<Self, ClassicalError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassicalError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| ClassicalError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassicalError> {
        std::fs::write(path, self.to_toml()).map_err(|e| ClassicalError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Intensity of type `k` at time `t` by direct kernel summation over
/// `history`. Events at exactly `t` are excluded (left limit), which is the
/// value the likelihood uses at an event time.
pub fn hawkes_intensity(p: &HawkesParams, history: &[Event], t: f64, k: usize) -> Result<f64, ClassicalError> {
    if k == 0 || k > p.k() {
        return Err(ClassicalError::UnknownType(k));
    }
    let mut rate = p.mu[k - 1];
    for e in history {
        if e.t > t {
            return Err(ClassicalError::HistoryAfterQuery { event: e.t, query: t });
        }
        if e.t < t {
            if e.k == 0 || e.k > p.k() {
                return Err(ClassicalError::UnknownType(e.k));
            }
            rate += p.alpha_at(k - 1, e.k - 1) * p.beta * (-p.beta * (t - e.t)).exp();
        }
    }
    Ok(rate)
}

/// Event term and compensator of the exact log-likelihood on `[0, t_obs]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikTerms {
    pub event_term: f64,
    pub compensator: f64,
}

impl LogLikTerms {
    pub fn loglik(&self) -> f64 {
        self.event_term - self.compensator
    }
}

/// Exact Hawkes log-likelihood terms via the exponential-kernel recursion
/// and the closed-form compensator.
pub fn hawkes_loglik_terms(p: &HawkesParams, seq: &EventSequence) -> Result<LogLikTerms, ClassicalError> {
    let k = p.k();
    let mut excitation = vec![0.0; k];
    let mut last = 0.0;
    let mut event_term = 0.0;
    let col_sums: Vec<f64> = (0..k).map(|j| (0..k).map(|r| p.alpha_at(r, j)).sum()).collect();
    let mut compensator = p.mu.iter().sum::<f64>() * seq.t_obs;
    for e in &seq.events {
        if e.k == 0 || e.k > k {
            return Err(ClassicalError::UnknownType(e.k));
        }
        let decay = (-p.beta * (e.t - last)).exp();
        excitation.iter_mut().for_each(|x| *x *= decay);
        let kk = e.k - 1;
        let rate = p.mu[kk] + (0..k).map(|j| p.alpha_at(kk, j) * excitation[j]).sum::<f64>();
        event_term += rate.ln();
        excitation[kk] += p.beta;
        compensator += col_sums[kk] * (1.0 - (-p.beta * (seq.t_obs - e.t)).exp());
        last = e.t;
    }
    Ok(LogLikTerms { event_term, compensator })
}

pub fn hawkes_loglik_exact(p: &HawkesParams, seq: &EventSequence) -> Result<f64, ClassicalError> {
    Ok(hawkes_loglik_terms(p, seq)?.loglik())
}

/// Ogata thinning on `[0, t_end]`. The bound is the current total
/// intensity, valid because the kernel only decays between events.
pub fn sample_hawkes_events<R: Rng>(p: &HawkesParams, t_end: f64, rng: &mut R) -> Result<Vec<Event>, ClassicalError> {
    p.check_stationary()?;
    let k = p.k();
    let mu_total: f64 = p.mu.iter().sum();
    let mut excitation = vec![0.0; k];
    let mut rates = vec![0.0; k];
    let mut events = Vec::new();
    let mut t = 0.0;
    let total_rate = |x: &[f64], out: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for r in 0..k {
            out[r] = p.mu[r] + (0..k).map(|j| p.alpha_at(r, j) * x[j]).sum::<f64>();
            total += out[r];
        }
        total
    };
    let mut bound = mu_total;
    loop {
        let u: f64 = rng.random();
        let wait = -(1.0 - u).ln() / bound;
        t += wait;
        if t > t_end {
            break;
        }
        let decay = (-p.beta * wait).exp();
        excitation.iter_mut().for_each(|x| *x *= decay);
        let total = total_rate(&excitation, &mut rates);
        let accept: f64 = rng.random();
        if accept * bound <= total {
            let mut pick = rng.random::<f64>() * total;
            let mut ty = k - 1;
            for (r, &rate) in rates.iter().enumerate() {
                if pick < rate {
                    ty = r;
                    break;
                }
                pick -= rate;
            }
            events.push(Event::new(t, ty + 1));
            if events.len() > MAX_SIMULATED_EVENTS {
                return Err(ClassicalError::ExplosionGuard(MAX_SIMULATED_EVENTS));
            }
            excitation[ty] += p.beta;
            bound = total_rate(&excitation, &mut rates);
        } else {
            bound = total;
        }
    }
    Ok(events)
}

/// One seeded sample on `[0, t_end]` as an unlabeled sequence.
pub fn ogata_sample(p: &HawkesParams, t_end: f64, seed: u64) -> Result<EventSequence, ClassicalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = sample_hawkes_events(p, t_end, &mut rng)?;
    Ok(EventSequence::new(format!("sim-{seed}"), 0, events, t_end))
}

/// `n` valid sequences from `p`; sequence `i` of the attempt stream uses
/// seed `seed + i`. With an adverse type in `catalog`, each sample is cut
/// at its first adverse event (label 1, window closes at the onset).
/// Samples with fewer than two events are skipped.
pub fn simulate_cohort(
    p: &HawkesParams,
    catalog: &EventTypeCatalog,
    t_end: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<EventSequence>, ClassicalError> {
    if catalog.k_total() != p.k() {
        return Err(ClassicalError::InvalidParams(format!(
            "catalog has {} types, parameters have {}",
            catalog.k_total(),
            p.k()
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut attempt = 0u64;
    while out.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        attempt += 1;
        let mut events = sample_hawkes_events(p, t_end, &mut rng)?;
        let mut label = 0;
        let mut t_obs = t_end;
        if let Some(adverse) = catalog.adverse_id() {
            if let Some(pos) = events.iter().position(|e| e.k == adverse) {
                events.truncate(pos + 1);
                label = 1;
                t_obs = events[pos].t;
            }
        }
        if events.len() >= 2 {
            out.push(EventSequence::new(format!("seq{:06}", out.len()), label, events, t_obs));
        }
        if attempt > 1000 + 1000 * n as u64 {
            return Err(ClassicalError::InvalidParams("parameters rarely produce two or more events".into()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct HawkesFitOptions {
    pub max_iters: usize,
    pub lr: f64,
    /// Stop once the best log-likelihood improves by less than this
    /// (relative) over `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    pub fit_beta: bool,
}

impl Default for HawkesFitOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            lr: 0.02,
            tol: 1e-9,
            patience: 200,
            fit_beta: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HawkesFit {
    pub params: HawkesParams,
    pub loglik: f64,
    pub init_loglik: f64,
    pub iterations: usize,
}

struct FitData {
    batch: PaddedBatch,
    k: usize,
    gaps: Vec<f64>,
    remaining: Vec<f64>,
    mask: Vec<f64>,
    type_idx: Vec<usize>,
    total_time: f64,
    n_events: usize,
}

impl FitData {
    fn new(seqs: &[EventSequence], k: usize) -> Result<Self, ClassicalError> {
        let catalog = EventTypeCatalog::generic(k);
        let refs: Vec<&EventSequence> = seqs.iter().collect();
        let batch = PaddedBatch::from_refs(&refs, &catalog, 1).map_err(|_| ClassicalError::NoData)?;
        let (b, l) = (batch.batch_size, batch.max_len);
        let mut gaps = vec![0.0; b * l];
        let mut remaining = vec![0.0; b * l];
        let mut mask = vec![0.0; b * l];
        let mut type_idx = vec![0; b * l];
        for r in 0..b {
            for i in 0..l {
                let at = r * l + i;
                let prev = if i == 0 { 0.0 } else { batch.time(r, i - 1) };
                gaps[at] = batch.time(r, i) - prev;
                if batch.is_real(r, i) {
                    mask[at] = 1.0;
                    type_idx[at] = batch.type_at(r, i) - 1;
                    remaining[at] = batch.t_obs[r] - batch.time(r, i);
                }
            }
        }
        Ok(Self {
            total_time: batch.t_obs.iter().sum(),
            n_events: batch.num_events(),
            batch,
            k,
            gaps,
            remaining,
            mask,
            type_idx,
        })
    }

    /// Total log-likelihood over all sequences as a graph scalar.
    fn loglik<'g>(&self, g: &'g Graph, mu: Tensor<'g>, alpha: Tensor<'g>, beta: Tensor<'g>) -> amberflag_autodiff::Result<Tensor<'g>> {
        let (b, l, k) = (self.batch.batch_size, self.batch.max_len, self.k);
        let alpha_t = alpha.transpose_last2()?;
        let neg_beta = beta.neg()?;
        let mut excitation = g.full(&[b, k], 0.0)?;
        let mut event_terms = Vec::with_capacity(l);
        for i in 0..l {
            let col = |v: &[f64]| (0..b).map(|r| v[r * l + i]).collect::<Vec<f64>>();
            let gap = g.constant(&[b, 1], col(&self.gaps))?;
            excitation = excitation.mul(gap.mul(neg_beta)?.exp()?)?;
            let rates = excitation.matmul(alpha_t)?.add(mu)?;
            let ids: Vec<usize> = (0..b).map(|r| self.type_idx[r * l + i]).collect();
            let mask = g.constant(&[b], col(&self.mask))?;
            event_terms.push(rates.gather_last(&ids)?.log()?.mul(mask)?.sum_all()?);
            let mut jump = vec![0.0; b * k];
            for r in 0..b {
                jump[r * k + ids[r]] = self.mask[r * l + i];
            }
            excitation = excitation.add(g.constant(&[b, k], jump)?.mul(beta)?)?;
        }
        let mut event_term = event_terms[0];
        for t in &event_terms[1..] {
            event_term = event_term.add(*t)?;
        }
        let base = mu.sum_all()?.scale(self.total_time)?;
        let col_sums = alpha.sum(0)?.reshape(&[k, 1])?;
        let per_event = g.embedding(col_sums, &self.type_idx)?.reshape(&[b * l])?;
        let remaining = g.constant(&[b * l], self.remaining.clone())?;
        let decayed = remaining.mul(neg_beta)?.exp()?.neg()?.add_scalar(1.0)?;
        let mask = g.constant(&[b * l], self.mask.clone())?;
        let excited = per_event.mul(decayed)?.mul(mask)?.sum_all()?;
        event_term.sub(base.add(excited)?)
    }
}

/// Maximum-likelihood Hawkes fit by Adam ascent on log-parameters. The
/// returned parameters are the best seen, so the log-likelihood never falls
/// below that of `init`.
pub fn fit_hawkes_mle(seqs: &[EventSequence], init: &HawkesParams, opts: &HawkesFitOptions) -> Result<HawkesFit, ClassicalError> {
    if seqs.is_empty() {
        return Err(ClassicalError::NoData);
    }
    let k = init.k();
    let data = FitData::new(seqs, k)?;
    let norm = data.n_events.max(1) as f64;
    let mut store = ParamStore::new();
    let log_mu = store.add("log_mu", &[k], init.mu.iter().map(|m| m.ln()).collect());
    // alpha entries may start at zero; keep them representable in log space
    let log_alpha = store.add("log_alpha", &[k, k], init.alpha.iter().map(|a| a.max(1e-6).ln()).collect());
    let log_beta = store.add("log_beta", &[], vec![init.beta.ln()]);
    let mut adam = AdamState::with_lr(&store, opts.lr);

    let to_params = |s: &ParamStore| -> Result<HawkesParams, ClassicalError> {
        HawkesParams::new(
            s.get(log_mu).data.iter().map(|x| x.exp()).collect(),
            s.get(log_alpha).data.iter().map(|x| x.exp()).collect(),
            s.get(log_beta).data[0].exp(),
        )
    };

    let init_loglik = seqs.iter().map(|s| hawkes_loglik_exact(init, s)).sum::<Result<f64, _>>()?;
    if !init_loglik.is_finite() {
        return Err(ClassicalError::NonFiniteLoss);
    }
    let mut best = (init.clone(), init_loglik);
    let mut last_improvement = 0;
    let mut reference = init_loglik;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let g = Graph::new();
        let mu = g.param(&store, log_mu).exp()?;
        let alpha = g.param(&store, log_alpha).exp()?;
        let beta = if opts.fit_beta {
            g.param(&store, log_beta).exp()?
        } else {
            g.constant(&[], vec![init.beta])?
        };
        let ll = match data.loglik(&g, mu, alpha, beta) {
            Ok(ll) => ll,
            Err(amberflag_autodiff::AutodiffError::NonFinite { .. }) => return Err(ClassicalError::NonFiniteLoss),
            Err(e) => return Err(e.into()),
        };
        let value = ll.item();
        if value > best.1 {
            best = (to_params(&store)?, value);
        }
        if best.1 - reference > opts.tol * reference.abs() {
            reference = best.1;
            last_improvement = it;
        } else if it - last_improvement > opts.patience {
            break;
        }
        let loss = ll.scale(-1.0 / norm)?;
        g.backward(loss)?;
        let mut grads = g.param_grads(&store);
        if !opts.fit_beta {
            grads[log_beta.index()][0] = 0.0;
        }
        adam.step(&mut store, &grads);
    }
    // the graph value is the same quantity as the closed form; report the latter
    let loglik = seqs.iter().map(|s| hawkes_loglik_exact(&best.0, s)).sum::<Result<f64, _>>()?;
    Ok(HawkesFit {
        params: best.0,
        loglik,
        init_loglik,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d() -> HawkesParams {
        HawkesParams::new(vec![0.5], vec![0.8], 1.0).unwrap()
    }

    #[test]
    fn intensity_examples() {
        let p = one_d();
        let v = hawkes_intensity(&p, &[Event::new(1.0, 1)], 2.0, 1).unwrap();
        assert!((v - (0.5 + 0.8 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((v - 0.79430).abs() < 1e-5);
        assert_eq!(hawkes_intensity(&p, &[], 3.0, 1).unwrap(), 0.5);
        let flat = HawkesParams::new(vec![0.3, 0.7], vec![0.0; 4], 2.0).unwrap();
        let hist = [Event::new(0.5, 1), Event::new(0.9, 2)];
        for t in [1.0, 2.0, 10.0] {
            assert_eq!(hawkes_intensity(&flat, &hist, t, 2).unwrap(), 0.7);
        }
        assert!(matches!(
            hawkes_intensity(&p, &[Event::new(5.0, 1)], 2.0, 1),
            Err(ClassicalError::HistoryAfterQuery { .. })
        ));
    }

    #[test]
    fn intensity_jumps_at_events() {
        let p = HawkesParams::new(vec![0.2, 0.4], vec![0.3, 0.1, 0.5, 0.2], 1.5).unwrap();
        let hist = [Event::new(0.4, 2), Event::new(1.0, 1)];
        for k in 1..=2 {
            let before = hawkes_intensity(&p, &hist[..1], 1.0 - 1e-9, k).unwrap();
            let at = hawkes_intensity(&p, &hist, 1.0, k).unwrap();
            let after = hawkes_intensity(&p, &hist, 1.0 + 1e-9, k).unwrap();
            assert!((before - at).abs() < 1e-6);
            assert!((after - at - p.alpha_at(k - 1, 0) * p.beta).abs() < 1e-6);
        }
    }

    #[test]
    fn poisson_limit_loglik() {
        let p = HawkesParams::new(vec![1.0], vec![0.0], 1.0).unwrap();
        let s = EventSequence::new("a", 0, vec![Event::new(0.5, 1), Event::new(1.5, 1)], 2.0);
        assert!((hawkes_loglik_exact(&p, &s).unwrap() + 2.0).abs() < 1e-12);
        let pp = PoissonParams::new(vec![1.0]).unwrap();
        assert!((pp.loglik(&s).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prefix_costs_only_base_rate() {
        let p = one_d();
        let s = EventSequence::new("a", 0, vec![], 3.0);
        assert!((hawkes_loglik_exact(&p, &s).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn sampler_basics() {
        let p = HawkesParams::new(vec![1.0], vec![0.0], 1.0).unwrap();
        assert!(ogata_sample(&p, 0.0, 1).unwrap().events.is_empty());
        let a = ogata_sample(&p, 1000.0, 42).unwrap();
        let b = ogata_sample(&p, 1000.0, 42).unwrap();
        assert_eq!(a, b);
        let rate = a.len() as f64 / 1000.0;
        assert!((0.9..=1.1).contains(&rate), "rate {rate}");
        let hot = HawkesParams::new(vec![1.0], vec![1.2], 1.0).unwrap();
        assert!(matches!(ogata_sample(&hot, 10.0, 1), Err(ClassicalError::NotStationary(_))));
    }

    #[test]
    fn toml_round_trip() {
        let p = HawkesParams::new(vec![0.25, 0.5], vec![0.1, 0.2, 0.3, 0.05], 1.25).unwrap();
        let text = p.to_toml();
        assert!(text.contains("K = 2"));
        assert_eq!(HawkesParams::from_toml(&text).unwrap(), p);
        assert!(HawkesParams::from_toml("K = 2\nmu = [1.0]\nalpha = [0.0]\nbeta = 1.0").is_err());
    }

    #[test]
    fn stationary_rates_solve_linear_system() {
        let p = HawkesParams::new(vec![0.4, 0.3], vec![0.3, 0.2, 0.15, 0.35], 1.0).unwrap();
        let r = p.stationary_rates().unwrap();
        for k in 0..2 {
            let lhs = r[k] - (0..2).map(|j| p.alpha_at(k, j) * r[j]).sum::<f64>();
            assert!((lhs - p.mu[k]).abs() < 1e-12);
        }
        // long horizons approach the stationary rate
        let c = p.expected_counts(2000.0);
        assert!((c[0] / 2000.0 - r[0]).abs() / r[0] < 2e-3);
    }

    #[test]
    fn fit_from_truth_does_not_decrease() {
        let p = HawkesParams::new(vec![0.5, 0.3], vec![0.2, 0.1, 0.1, 0.3], 1.0).unwrap();
        let seqs = simulate_cohort(&p, &EventTypeCatalog::generic(2), 20.0, 20, 3).unwrap();
        let fit = fit_hawkes_mle(&seqs, &p, &HawkesFitOptions { max_iters: 50, ..Default::default() }).unwrap();
        assert!(fit.loglik >= fit.init_loglik);
        // degenerate input: one two-event sequence
        let tiny = vec![EventSequence::new("t", 0, vec![Event::new(0.5, 1), Event::new(1.0, 2)], 2.0)];
        let fit = fit_hawkes_mle(&tiny, &p, &HawkesFitOptions { max_iters: 300, ..Default::default() }).unwrap();
        assert!(fit.loglik.is_finite() && fit.loglik >= fit.init_loglik);
    }

    #[test]
    fn graph_loglik_matches_closed_form() {
        let p = HawkesParams::new(vec![0.5, 0.3], vec![0.2, 0.1, 0.1, 0.3], 1.3).unwrap();
        let seqs = simulate_cohort(&p, &EventTypeCatalog::generic(2), 15.0, 7, 9).unwrap();
        let data = FitData::new(&seqs, 2).unwrap();
        let g = Graph::new();
        let mu = g.constant(&[2], p.mu.clone()).unwrap();
        let alpha = g.constant(&[2, 2], p.alpha.clone()).unwrap();
        let beta = g.constant(&[], vec![p.beta]).unwrap();
        let via_graph = data.loglik(&g, mu, alpha, beta).unwrap().item();
        let exact: f64 = seqs.iter().map(|s| hawkes_loglik_exact(&p, s).unwrap()).sum();
        assert!((via_graph - exact).abs() < 1e-9 * exact.abs());
    }

    #[test]
    fn adverse_catalog_truncates_at_onset() {
        let p = HawkesParams::new(vec![0.5, 0.5, 0.05], vec![0.1; 9], 1.0).unwrap();
        let cat = EventTypeCatalog::clinical(vec!["a".into(), "b".into()], "adverse").unwrap();
        let seqs = simulate_cohort(&p, &cat, 30.0, 50, 1).unwrap();
        assert_eq!(seqs.len(), 50);
        assert!(seqs.iter().any(|s| s.label == 1));
        for s in &seqs {
            s.validate(&cat).unwrap();
        }
    }
}
