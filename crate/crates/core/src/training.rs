//! Negative log-likelihood training with a Monte-Carlo compensator.
//!
//! Intensity models integrate `Σ_k λ_k` over each interval by averaging the
//! intensity at uniformly drawn times; the intensity-free model uses its
//! normalized density and the survival function for the open tail.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amberflag_autodiff::{AdamState, AutodiffError, Graph, ParamStore, Tensor};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::LogLikTerms;
use crate::event::{EventSequence, PaddedBatch, SplitDataset};
use crate::models::{IntensityModel, McDraws, ModelError, NeuralModel, TimeLaw};
use crate::seeds;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        /// The model as it was before the failing update.
        last_good: Box<NeuralModel>,
    },
    #[error("training split is empty")]
    EmptyTrain,
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub mc_samples_per_interval: usize,
    /// Samples per interval for the per-epoch dev evaluation.
    pub dev_mc_samples: usize,
    pub lr: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            mc_samples_per_interval: 20,
            dev_mc_samples: 100,
            lr: 1e-3,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.mc_samples_per_interval == 0 || self.dev_mc_samples == 0 {
            return Err(TrainError::BadConfig("batch size and sample counts must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::BadConfig(format!("learning rate {}", self.lr)));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(TrainError::BadConfig("checkpoint_every needs checkpoint_dir".into()));
        }
        Ok(())
    }
}

/// Likelihood terms in nats. `nll` is per real event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub event_term: f64,
    pub compensator_term: f64,
    pub num_events: usize,
    pub nll: f64,
}

impl LossBreakdown {
    fn new(event_term: f64, compensator_term: f64, num_events: usize) -> Self {
        Self {
            event_term,
            compensator_term,
            num_events,
            nll: (compensator_term - event_term) / num_events.max(1) as f64,
        }
    }

    pub fn total_nll(&self) -> f64 {
        self.compensator_term - self.event_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub dev_nll: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NeuralModel,
    pub log: Vec<EpochRecord>,
    pub optimizer: AdamState,
}

fn to_autodiff(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(a) => a,
        other => AutodiffError::InvalidArgument {
            op: "nll",
            msg: other.to_string(),
        },
    }
}

/// Per-event NLL of `batch` as a graph scalar, for gradient checks with
/// frozen draws.
pub fn nll_objective<'g>(
    model: &NeuralModel,
    g: &'g Graph,
    store: &ParamStore,
    batch: &PaddedBatch,
    draws: &McDraws,
) -> amberflag_autodiff::Result<Tensor<'g>> {
    let (terms, _) = model.nll_terms(g, store, batch, draws).map_err(to_autodiff)?;
    terms.nll()?.scale(1.0 / terms.num_events.max(1) as f64)
}

/// Graph-route loss of one batch, no gradients.
pub fn nll_loss(model: &NeuralModel, batch: &PaddedBatch, samples: usize, seed: u64) -> Result<LossBreakdown, ModelError> {
    let draws = McDraws::new(batch, samples, seed);
    let g = Graph::new();
    let (terms, _) = model.nll_terms(&g, &model.params, batch, &draws)?;
    Ok(LossBreakdown::new(terms.event_term.item(), terms.compensator.item(), terms.num_events))
}

/// Graph-route loss over many sequences, batched in input order and summed
/// sequentially.
pub fn evaluate_nll(model: &NeuralModel, seqs: &[EventSequence], batch_size: usize, samples: usize, seed: u64) -> Result<LossBreakdown, ModelError> {
    let (mut ev, mut comp, mut n) = (0.0, 0.0, 0);
    for chunk in seqs.chunks(batch_size.max(1)) {
        let refs: Vec<&EventSequence> = chunk.iter().collect();
        let l = nll_loss(model, &model.batch(&refs)?, samples, seed)?;
        ev += l.event_term;
        comp += l.compensator_term;
        n += l.num_events;
    }
    Ok(LossBreakdown::new(ev, comp, n))
}

/// Monte-Carlo estimate of `∫_0^{T_obs} Σ_k λ_k dt` through a model's laws:
/// `samples` uniform times per interval, the tail after the last event
/// included. Density laws contribute nothing.
pub fn mc_compensator(model: &dyn IntensityModel, seq: &EventSequence, samples: usize, seed: u64) -> Result<f64, ModelError> {
    Ok(sequence_loglik(model, seq, samples, seed)?.compensator)
}

/// Log-likelihood terms of one sequence through a model's laws, with the
/// same per-sequence draws as the graph route.
pub fn sequence_loglik(model: &dyn IntensityModel, seq: &EventSequence, samples: usize, seed: u64) -> Result<LogLikTerms, ModelError> {
    let laws = model.next_event_laws(&seq.events)?;
    let n = seq.events.len();
    let fractions = McDraws::for_sequence(seed, &seq.seq_id, n + 1, samples);
    let mut event_term = 0.0;
    let mut compensator = 0.0;
    for (p, law) in laws.iter().enumerate() {
        let start = law.t_last;
        let end = seq.events.get(p).map_or(seq.t_obs, |e| e.t);
        let len = end - start;
        if let Some(e) = seq.events.get(p) {
            event_term += law.log_event_term(e.t, e.k)?;
        }
        match &law.time {
            TimeLaw::Intensity(f) => {
                let mut rates = vec![0.0; f.num_types()];
                let mut total = 0.0;
                for u in &fractions[p * samples..(p + 1) * samples] {
                    f.rates_into(start + u * len, &mut rates);
                    total += rates.iter().sum::<f64>();
                }
                compensator += total / samples as f64 * len;
            }
            TimeLaw::Density(mix) => {
                if p == n && len > 0.0 {
                    event_term += mix.log_survival(len);
                }
            }
            TimeLaw::PointMass(_) => return Err(ModelError::UnsupportedForIF),
        }
    }
    Ok(LogLikTerms { event_term, compensator })
}

fn grads_finite(grads: &[Vec<f64>]) -> bool {
    grads.iter().flatten().all(|g| g.is_finite())
}

/// Adam on the per-event NLL (plus the classification head's cross-entropy
/// on detached states, which leaves the likelihood gradients untouched).
pub fn train(model: NeuralModel, data: &SplitDataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut model = model;
    let mut adam = AdamState::with_lr(&model.params, cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();
    let dev_seed = seeds::derive(cfg.seed, "dev", 0);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mc_seed = seeds::derive(cfg.seed, "mc", epoch as u64);
        let (mut total, mut events) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&EventSequence> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = model.batch(&refs)?;
            let draws = McDraws::new(&batch, cfg.mc_samples_per_interval, mc_seed);
            let non_finite = || TrainError::NonFiniteLoss {
                epoch,
                batch: bi,
                last_good: Box::new(model.clone()),
            };
            let g = Graph::new();
            let (terms, enc) = match model.nll_terms(&g, &model.params, &batch, &draws) {
                Ok(t) => t,
                Err(ModelError::Autodiff(AutodiffError::NonFinite { .. })) => return Err(non_finite()),
                Err(e) => return Err(e.into()),
            };
            let n = terms.num_events.max(1) as f64;
            let nll = terms.nll().map_err(ModelError::from)?;
            let mut loss = nll.scale(1.0 / n).map_err(ModelError::from)?;
            match model.head_loss(&g, &model.params, &enc, &batch) {
                Ok(Some(ce)) => loss = loss.add(ce.scale(1.0 / n).map_err(ModelError::from)?).map_err(ModelError::from)?,
                Ok(None) => {}
                Err(ModelError::Autodiff(AutodiffError::NonFinite { .. })) => return Err(non_finite()),
                Err(e) => return Err(e.into()),
            }
            if !loss.item().is_finite() {
                return Err(non_finite());
            }
            match g.backward(loss) {
                Ok(()) => {}
                Err(AutodiffError::NonFinite { .. }) => return Err(non_finite()),
                Err(e) => return Err(ModelError::from(e).into()),
            }
            let grads = g.param_grads(&model.params);
            if !grads_finite(&grads) {
                return Err(non_finite());
            }
            total += nll.item();
            events += terms.num_events;
            drop(g);
            adam.step(&mut model.params, &grads);
        }
        let train_nll = total / events.max(1) as f64;
        let dev_nll = if data.dev.is_empty() {
            f64::NAN
        } else {
            evaluate_nll(&model, &data.dev, cfg.batch_size, cfg.dev_mc_samples, dev_seed)?.nll
        };
        let record = EpochRecord {
            epoch,
            train_nll,
            dev_nll,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        debug!("{} epoch {epoch}: train {train_nll:.4} dev {dev_nll:.4}", model.config.kind);
        log.push(record);
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            let dir = cfg.checkpoint_dir.as_ref().expect("validated");
            let path = dir.join(format!("{}_epoch{epoch:04}.json", model.config.kind));
            model.save(&path, Some(&adam))?;
        }
    }
    if let Some(last) = log.last() {
        info!("{} trained {} epochs: dev nll {:.4}", model.config.kind, last.epoch, last.dev_nll);
    }
    Ok(TrainOutcome {
        model,
        log,
        optimizer: adam,
    })
}

/// `epoch,train_nll,dev_nll,wall_seconds` with a header row.
pub fn write_epoch_log<W: Write>(log: &[EpochRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_nll,dev_nll,wall_seconds")?;
    for r in log {
        writeln!(w, "{},{:.6},{:.6},{:.3}", r.epoch, r.train_nll, r.dev_nll, r.wall_seconds)?;
    }
    Ok(())
}

pub fn save_epoch_log(log: &[EpochRecord], path: &Path) -> Result<(), TrainError> {
    let io = |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    };
    let f = std::fs::File::create(path).map_err(io)?;
    write_epoch_log(log, std::io::BufWriter::new(f)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{hawkes_loglik_terms, HawkesParams, PoissonParams};
    use crate::event::Event;
    use crate::models::{ConstantIntensity, ModelConfig, ModelKind};

    fn two_events() -> EventSequence {
        EventSequence::new("a", 0, vec![Event::new(0.5, 1), Event::new(1.5, 1)], 2.0)
    }

    #[test]
    fn poisson_oracle_nll() {
        let p = PoissonParams::new(vec![1.0]).unwrap();
        let ll = sequence_loglik(&p, &two_events(), 20, 1).unwrap();
        assert!((ll.compensator - ll.event_term - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_integrand_is_exact() {
        let m = ConstantIntensity::new(vec![0.7, 0.8]);
        for seed in 0..5 {
            let c = mc_compensator(&m, &two_events(), 3, seed).unwrap();
            assert!((c - 1.5 * 2.0).abs() < 1e-12);
        }
        // a zero-length tail contributes nothing
        let s = EventSequence::new("z", 1, vec![Event::new(0.5, 1), Event::new(2.0, 2)], 2.0);
        assert!((mc_compensator(&m, &s, 7, 0).unwrap() - 1.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn hawkes_compensator_close_to_closed_form() {
        let p = HawkesParams::new(vec![0.4, 0.3], vec![0.3, 0.2, 0.1, 0.4], 1.2).unwrap();
        let s = crate::classical::ogata_sample(&p, 20.0, 4).unwrap();
        let exact = hawkes_loglik_terms(&p, &s).unwrap().compensator;
        let mc = mc_compensator(&p, &s, 1000, 9).unwrap();
        assert!((mc - exact).abs() / exact < 0.02);
    }

    #[test]
    fn graph_and_law_routes_agree() {
        let seqs = vec![
            EventSequence::new("a", 0, vec![Event::new(0.3, 1), Event::new(1.1, 2), Event::new(1.4, 1)], 2.5),
            EventSequence::new("b", 0, vec![Event::new(0.0, 2), Event::new(0.9, 2)], 0.9),
        ];
        for kind in ModelKind::ALL {
            let m = NeuralModel::new(ModelConfig::new(kind, 2).with_seed(7).with_gap_stats(&seqs)).unwrap();
            let refs: Vec<&EventSequence> = seqs.iter().collect();
            let loss = nll_loss(&m, &m.batch(&refs).unwrap(), 5, 13).unwrap();
            let (mut ev, mut comp) = (0.0, 0.0);
            for s in &seqs {
                let t = sequence_loglik(&m, s, 5, 13).unwrap();
                ev += t.event_term;
                comp += t.compensator;
            }
            assert!((loss.event_term - ev).abs() < 1e-9 * ev.abs().max(1.0), "{kind}: {} vs {ev}", loss.event_term);
            assert!((loss.compensator_term - comp).abs() < 1e-9 * comp.abs().max(1.0), "{kind}");
        }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let seqs = vec![two_events()];
        let m = NeuralModel::new(ModelConfig::new(ModelKind::Rmtpp, 1)).unwrap();
        let data = SplitDataset {
            train: seqs,
            test: vec![],
            dev: vec![],
            split_seed: 0,
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(out.model.params, m.params);
        assert!(out.log.is_empty());
    }

    #[test]
    fn epoch_log_format() {
        let mut buf = Vec::new();
        write_epoch_log(
            &[EpochRecord {
                epoch: 1,
                train_nll: 1.5,
                dev_nll: 1.25,
                wall_seconds: 0.5,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_nll,dev_nll,wall_seconds\n1,1.500000,1.250000,0.500\n");
    }
}
