//! Held-out likelihood, next-event accuracy and horizon forecasting scored
//! by optimal transport distance.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventSequence};
use crate::models::{argmax_type, IntensityModel, ModelError, TypeRule};
use crate::seeds;
use crate::training::{sequence_loglik, EpochRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("optimal transport needs two non-empty sequences")]
    EmptySequence,
    #[error("forecast reached {time} hours, past the limit of {limit}")]
    HorizonOverflow { time: f64, limit: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Mean per-event log-likelihood over `split` with `samples` Monte-Carlo
/// points per interval.
pub fn heldout_loglik(model: &dyn IntensityModel, split: &[EventSequence], samples: usize, seed: u64) -> Result<f64> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let (mut total, mut events) = (0.0, 0usize);
    for s in split {
        total += sequence_loglik(model, s, samples, seed)?.loglik();
        events += s.len();
    }
    Ok(total / events.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextEventMetrics {
    pub accuracy: f64,
    pub time_rmse: f64,
    pub transitions: usize,
}

/// Scores the prediction after every non-empty prefix against the event
/// that follows it.
pub fn next_event_metrics(model: &dyn IntensityModel, split: &[EventSequence], rule: TypeRule) -> Result<NextEventMetrics> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let (mut hits, mut sq, mut n) = (0usize, 0.0, 0usize);
    for s in split {
        let laws = model.next_event_laws(&s.events)?;
        for i in 1..s.len() {
            let pred = laws[i].predict(rule)?;
            let truth = s.events[i];
            hits += usize::from(pred.predicted_type() == truth.k);
            sq += (pred.t_next - truth.t).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptySplit);
    }
    Ok(NextEventMetrics {
        accuracy: hits as f64 / n as f64,
        time_rmse: (sq / n as f64).sqrt(),
        transitions: n,
    })
}

/// Next-type accuracy alone, over the same transitions as
/// [`next_event_metrics`]. Needs no expected times, so it also scores
/// models whose time law leaks mass past the quadrature horizon.
pub fn next_type_accuracy(model: &dyn IntensityModel, split: &[EventSequence], rule: TypeRule) -> Result<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for s in split {
        let laws = model.next_event_laws(&s.events)?;
        for i in 1..s.len() {
            hits += usize::from(argmax_type(&laws[i].type_probs(rule)?) == s.events[i].k);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptySplit);
    }
    Ok(hits as f64 / n as f64)
}

/// Accuracy of always predicting the most frequent next type of `train`
/// (lowest id on ties) on the transitions of `split`.
pub fn majority_baseline(train: &[EventSequence], split: &[EventSequence], num_types: usize) -> f64 {
    let mut counts = vec![0usize; num_types + 1];
    for s in train {
        for e in s.events.iter().skip(1) {
            counts[e.k] += 1;
        }
    }
    let majority = (1..=num_types).fold(1, |best, k| if counts[k] > counts[best] { k } else { best });
    let (mut hits, mut n) = (0usize, 0usize);
    for s in split {
        for e in s.events.iter().skip(1) {
            hits += usize::from(e.k == majority);
            n += 1;
        }
    }
    hits as f64 / n.max(1) as f64
}

/// 1-D Wasserstein-1 distance between the empirical distributions of two
/// samples: mean absolute difference of sorted values for equal sizes,
/// otherwise the area between the empirical CDFs.
pub fn otd_times(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySequence);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut points: Vec<f64> = a.iter().chain(&b).copied().collect();
    points.sort_by(f64::total_cmp);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut area = 0.0;
    for w in points.windows(2) {
        while ia < a.len() && a[ia] <= w[0] {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= w[0] {
            ib += 1;
        }
        area += (ia as f64 / na - ib as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(area)
}

/// Optimal transport distance between the event times of two sequences.
pub fn otd(predicted: &[Event], truth: &[Event]) -> Result<f64> {
    let times = |s: &[Event]| s.iter().map(|e| e.t).collect::<Vec<_>>();
    otd_times(&times(predicted), &times(truth))
}

/// Per-type distance averaged over the types present in either sequence; a
/// type present in only one of them costs `horizon_hours`.
pub fn type_aware_otd(predicted: &[Event], truth: &[Event], horizon_hours: f64) -> Result<f64> {
    if predicted.is_empty() || truth.is_empty() {
        return Err(EvalError::EmptySequence);
    }
    let types: BTreeSet<usize> = predicted.iter().chain(truth).map(|e| e.k).collect();
    let of = |s: &[Event], k: usize| s.iter().filter(|e| e.k == k).map(|e| e.t).collect::<Vec<_>>();
    let mut total = 0.0;
    for &k in &types {
        let (p, t) = (of(predicted, k), of(truth, k));
        total += if p.is_empty() || t.is_empty() { horizon_hours } else { otd_times(&p, &t)? };
    }
    Ok(total / types.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Argmax type and expected time at every step.
    Expected,
    /// Draws from the type distribution and the time density.
    #[default]
    Sampled,
}

/// Predictions past `prefix end + 10 × max(prefix end, 20 mean gaps)` abort
/// the rollout.
fn rollout_limit(prefix: &[Event], mean_gap: f64) -> f64 {
    let end = prefix.last().map_or(0.0, |e| e.t);
    end + 10.0 * end.max(20.0 * mean_gap)
}

/// Appends `n` events one at a time, feeding each back as history.
pub fn horizon_rollout(model: &dyn IntensityModel, prefix: &[Event], n: usize, mode: RolloutMode, seed: u64) -> Result<Vec<Event>> {
    let mut rows = rollout_batch(model, &[prefix], n, mode, &[seed], TypeRule::Head)?;
    Ok(rows.pop().unwrap_or_default())
}

/// Independent rollouts of many prefixes, stepped together so batched
/// models encode all rows at once. Row `i` draws from its own `seeds[i]`.
pub fn rollout_batch(
    model: &dyn IntensityModel,
    prefixes: &[&[Event]],
    n: usize,
    mode: RolloutMode,
    seeds: &[u64],
    rule: TypeRule,
) -> Result<Vec<Vec<Event>>> {
    let mut histories: Vec<Vec<Event>> = prefixes.iter().map(|p| p.to_vec()).collect();
    let limits: Vec<f64> = prefixes.iter().map(|p| rollout_limit(p, model.mean_gap())).collect();
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    for _ in 0..n {
        let refs: Vec<&[Event]> = histories.iter().map(Vec::as_slice).collect();
        let laws = model.last_laws(&refs)?;
        for (row, law) in laws.iter().enumerate() {
            let next = match mode {
                RolloutMode::Expected => {
                    let p = law.predict(rule)?;
                    Event::new(p.t_next, p.predicted_type())
                }
                RolloutMode::Sampled => law.sample(rule, &mut rngs[row])?,
            };
            if next.t > limits[row] {
                return Err(EvalError::HorizonOverflow {
                    time: next.t,
                    limit: limits[row],
                });
            }
            histories[row].push(next);
        }
    }
    Ok(histories
        .into_iter()
        .zip(prefixes)
        .map(|(h, p)| h[p.len()..].to_vec())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtdConfig {
    pub short: usize,
    pub long: usize,
    pub rollouts: usize,
    pub mode: RolloutMode,
    /// Shortest prefix used as forecast origin.
    pub min_prefix: usize,
    pub max_prefixes: usize,
    /// Rows encoded together per rollout step.
    pub chunk: usize,
    pub seed: u64,
}

impl Default for OtdConfig {
    fn default() -> Self {
        Self {
            short: 3,
            long: 6,
            rollouts: 10,
            mode: RolloutMode::Sampled,
            min_prefix: 2,
            max_prefixes: 500,
            chunk: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonOtd {
    pub otd_short: f64,
    pub otd_long: f64,
    pub prefixes: usize,
}

/// Forecast origins: every cut of every sequence that leaves at least
/// `long` true events to compare against, in split order.
pub fn forecast_origins(split: &[EventSequence], cfg: &OtdConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (si, s) in split.iter().enumerate() {
        for cut in cfg.min_prefix.max(1)..=s.len().saturating_sub(cfg.long) {
            if out.len() == cfg.max_prefixes {
                return out;
            }
            out.push((si, cut));
        }
    }
    out
}

/// Mean OTD against the true continuation for each horizon in `horizons`
/// (each at most `cfg.long`), plus the number of forecast origins. Shorter
/// horizons score the leading events of each `cfg.long`-event rollout,
/// which for autoregressive sampling is the same as a separate shorter run
/// with the same seed.
pub fn otd_by_horizon(model: &dyn IntensityModel, split: &[EventSequence], horizons: &[usize], cfg: &OtdConfig) -> Result<(Vec<f64>, usize)> {
    let origins = forecast_origins(split, cfg);
    if origins.is_empty() || horizons.iter().any(|&h| h == 0 || h > cfg.long) {
        return Err(EvalError::EmptySplit);
    }
    let rollouts = match cfg.mode {
        RolloutMode::Expected => 1,
        RolloutMode::Sampled => cfg.rollouts.max(1),
    };
    // (origin index, rollout index)
    let jobs: Vec<(usize, usize)> = (0..origins.len())
        .flat_map(|oi| (0..rollouts).map(move |r| (oi, r)))
        .collect();
    let mut sums = vec![0.0; horizons.len()];
    for chunk in jobs.chunks(cfg.chunk.max(1)) {
        let prefixes: Vec<&[Event]> = chunk
            .iter()
            .map(|&(oi, _)| {
                let (si, cut) = origins[oi];
                &split[si].events[..cut]
            })
            .collect();
        let row_seeds: Vec<u64> = chunk
            .iter()
            .map(|&(oi, r)| seeds::derive(cfg.seed, "rollout", (oi * rollouts + r) as u64))
            .collect();
        let forecasts = rollout_batch(model, &prefixes, cfg.long, cfg.mode, &row_seeds, TypeRule::Head)?;
        for (&(oi, _), f) in chunk.iter().zip(&forecasts) {
            let (si, cut) = origins[oi];
            let truth = &split[si].events[cut..cut + cfg.long];
            for (sum, &h) in sums.iter_mut().zip(horizons) {
                *sum += otd(&f[..h], &truth[..h])?;
            }
        }
    }
    let n = jobs.len() as f64;
    Ok((sums.into_iter().map(|s| s / n).collect(), origins.len()))
}

/// Mean OTD of `cfg.short`- and `cfg.long`-event rollouts.
pub fn horizon_otd(model: &dyn IntensityModel, split: &[EventSequence], cfg: &OtdConfig) -> Result<HorizonOtd> {
    let (means, prefixes) = otd_by_horizon(model, split, &[cfg.short, cfg.long], cfg)?;
    Ok(HorizonOtd {
        otd_short: means[0],
        otd_long: means[1],
        prefixes,
    })
}

/// Rollout length cap for hour-based horizons.
pub const MAX_ROLLOUT_EVENTS: usize = 256;

/// Mean OTD for wall-clock horizons: the forecast and the truth are the
/// events falling within `h` hours after the prefix. Origins are cuts whose
/// observation window covers the longest horizon. When exactly one side is
/// empty the pair costs `h`; when both are, it costs nothing.
pub fn otd_by_hours(model: &dyn IntensityModel, split: &[EventSequence], hours: &[f64], cfg: &OtdConfig) -> Result<(Vec<f64>, usize)> {
    let longest = hours.iter().copied().fold(0.0, f64::max);
    if hours.is_empty() || hours.iter().any(|&h| !(h > 0.0)) {
        return Err(EvalError::EmptySplit);
    }
    let mut origins = Vec::new();
    'outer: for (si, s) in split.iter().enumerate() {
        for cut in cfg.min_prefix.max(1)..s.len() {
            if s.events[cut - 1].t + longest > s.t_obs {
                break;
            }
            if origins.len() == cfg.max_prefixes {
                break 'outer;
            }
            origins.push((si, cut));
        }
    }
    if origins.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let rollouts = match cfg.mode {
        RolloutMode::Expected => 1,
        RolloutMode::Sampled => cfg.rollouts.max(1),
    };
    let jobs: Vec<(usize, usize)> = (0..origins.len())
        .flat_map(|oi| (0..rollouts).map(move |r| (oi, r)))
        .collect();
    let mut sums = vec![0.0; hours.len()];
    for chunk in jobs.chunks(cfg.chunk.max(1)) {
        let ends: Vec<f64> = chunk
            .iter()
            .map(|&(oi, _)| {
                let (si, cut) = origins[oi];
                split[si].events[cut - 1].t
            })
            .collect();
        let mut histories: Vec<Vec<Event>> = chunk
            .iter()
            .map(|&(oi, _)| {
                let (si, cut) = origins[oi];
                split[si].events[..cut].to_vec()
            })
            .collect();
        let mut rngs: Vec<ChaCha8Rng> = chunk
            .iter()
            .map(|&(oi, r)| ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "rollout-hours", (oi * rollouts + r) as u64)))
            .collect();
        let mut active: Vec<usize> = (0..chunk.len()).collect();
        for _ in 0..MAX_ROLLOUT_EVENTS {
            if active.is_empty() {
                break;
            }
            let refs: Vec<&[Event]> = active.iter().map(|&i| histories[i].as_slice()).collect();
            let laws = model.last_laws(&refs)?;
            let mut still = Vec::with_capacity(active.len());
            for (&row, law) in active.iter().zip(&laws) {
                let next = match cfg.mode {
                    RolloutMode::Expected => {
                        let p = law.predict(TypeRule::Head)?;
                        Event::new(p.t_next, p.predicted_type())
                    }
                    RolloutMode::Sampled => law.sample(TypeRule::Head, &mut rngs[row])?,
                };
                histories[row].push(next);
                if next.t <= ends[row] + longest {
                    still.push(row);
                }
            }
            active = still;
        }
        for (row, &(oi, _)) in chunk.iter().enumerate() {
            let (si, cut) = origins[oi];
            let forecast = &histories[row][cut..];
            let truth = &split[si].events[cut..];
            for (sum, &h) in sums.iter_mut().zip(hours) {
                let within = |s: &[Event]| s.iter().filter(|e| e.t <= ends[row] + h).copied().collect::<Vec<_>>();
                let (f, t) = (within(forecast), within(truth));
                *sum += match (f.is_empty(), t.is_empty()) {
                    (true, true) => 0.0,
                    (false, false) => otd(&f, &t)?,
                    _ => h,
                };
            }
        }
    }
    let n = jobs.len() as f64;
    Ok((sums.into_iter().map(|s| s / n).collect(), origins.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ll_samples: usize,
    pub seed: u64,
    pub otd: OtdConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ll_samples: 100,
            seed: 0,
            otd: OtdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    /// Negative held-out log-likelihood, nats per event.
    pub dev_nll: f64,
    /// Type accuracy of the classification head (the default rule).
    pub next_type_accuracy: f64,
    /// Type accuracy of the competing-risks intensity rule, when the model
    /// has intensities.
    pub intensity_accuracy: Option<f64>,
    pub next_time_rmse: f64,
    pub otd_short: f64,
    pub otd_long: f64,
}

pub fn build_report(model: &dyn IntensityModel, dataset: &str, split: &[EventSequence], cfg: &EvalConfig) -> Result<MetricReport> {
    let ll = heldout_loglik(model, split, cfg.ll_samples, seeds::derive(cfg.seed, "heldout", 0))?;
    let head = next_event_metrics(model, split, TypeRule::Head)?;
    let has_intensity = matches!(
        model.next_event_laws(&[])?.first().map(|l| &l.time),
        Some(crate::models::TimeLaw::Intensity(_))
    );
    let intensity_accuracy = if has_intensity {
        Some(next_event_metrics(model, split, TypeRule::IntensityArgmax)?.accuracy)
    } else {
        None
    };
    let otd = horizon_otd(model, split, &cfg.otd)?;
    Ok(MetricReport {
        model: model.name().to_string(),
        dataset: dataset.to_string(),
        dev_nll: -ll,
        next_type_accuracy: head.accuracy,
        intensity_accuracy,
        next_time_rmse: head.time_rmse,
        otd_short: otd.otd_short,
        otd_long: otd.otd_long,
    })
}

/// Training curve of one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LlCurve {
    pub model: String,
    pub dataset: String,
    pub epochs: Vec<EpochRecord>,
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    body(&mut f).map_err(io)?;
    f.flush().map_err(io)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes `accuracy_table.csv`, one `otd_<dataset>.csv` per dataset and one
/// `ll_curve_<model>_<dataset>.csv` per curve. Returns the paths written.
pub fn emit_tables(reports: &[MetricReport], curves: &[LlCurve], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let path = dir.join("accuracy_table.csv");
    write_file(&path, |w| {
        writeln!(w, "model,dataset,dev_nll,next_type_accuracy,intensity_accuracy,next_time_rmse")?;
        for r in reports {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{},{:.6}",
                r.model,
                r.dataset,
                r.dev_nll,
                r.next_type_accuracy,
                opt(r.intensity_accuracy),
                r.next_time_rmse
            )?;
        }
        Ok(())
    })?;
    written.push(path);
    let datasets: BTreeSet<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
    for ds in datasets {
        let path = dir.join(format!("otd_{ds}.csv"));
        write_file(&path, |w| {
            writeln!(w, "model,otd_short,otd_long")?;
            for r in reports.iter().filter(|r| r.dataset == ds) {
                writeln!(w, "{},{:.6},{:.6}", r.model, r.otd_short, r.otd_long)?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    for c in curves {
        let path = dir.join(format!("ll_curve_{}_{}.csv", c.model, c.dataset));
        write_file(&path, |w| {
            writeln!(w, "epoch,train_loglik,dev_loglik")?;
            for e in &c.epochs {
                writeln!(w, "{},{:.6},{:.6}", e.epoch, -e.train_nll, -e.dev_nll)?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConstantIntensity;

    fn ev(times: &[f64]) -> Vec<Event> {
        times.iter().map(|&t| Event::new(t, 1)).collect()
    }

    #[test]
    fn otd_fixtures() {
        assert_eq!(otd(&ev(&[0.0, 1.0]), &ev(&[0.0, 2.0])).unwrap(), 0.5);
        assert_eq!(otd(&ev(&[0.0]), &ev(&[0.0, 2.0])).unwrap(), 1.0);
        assert_eq!(otd(&ev(&[0.3, 1.7]), &ev(&[0.3, 1.7])).unwrap(), 0.0);
        assert!(matches!(otd(&[], &ev(&[1.0])), Err(EvalError::EmptySequence)));
    }

    #[test]
    fn type_aware_penalizes_missing_types() {
        let a = vec![Event::new(1.0, 1), Event::new(2.0, 2)];
        let b = vec![Event::new(1.5, 1), Event::new(2.0, 3)];
        // type 1: 0.5; types 2 and 3 unmatched: 6 each
        assert!((type_aware_otd(&a, &b, 6.0).unwrap() - (0.5 + 12.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rollout_steps_by_the_mean_gap() {
        let m = ConstantIntensity::new(vec![2.0]);
        assert!(horizon_rollout(&m, &ev(&[1.0]), 0, RolloutMode::Expected, 0).unwrap().is_empty());
        let out = horizon_rollout(&m, &ev(&[1.0]), 3, RolloutMode::Expected, 0).unwrap();
        for (i, e) in out.iter().enumerate() {
            assert!((e.t - (1.0 + 0.5 * (i + 1) as f64)).abs() < 5e-3, "{out:?}");
            assert_eq!(e.k, 1);
        }
    }

    #[test]
    fn hour_horizon_counts_the_window() {
        // rate 2 with expected steps of 0.5 h: four forecast events in 2 h
        let m = ConstantIntensity::new(vec![2.0]);
        let seq = EventSequence::new("s", 0, ev(&[1.0, 1.5, 2.0, 2.5, 3.0]), 3.0);
        let cfg = OtdConfig {
            mode: RolloutMode::Expected,
            min_prefix: 1,
            max_prefixes: 1,
            ..OtdConfig::default()
        };
        let (means, n) = otd_by_hours(&m, &[seq], &[2.0], &cfg).unwrap();
        assert_eq!(n, 1);
        assert!(means[0] < 5e-3, "{means:?}");
    }

    #[test]
    fn empty_split_is_an_error() {
        let m = ConstantIntensity::new(vec![1.0]);
        assert!(matches!(heldout_loglik(&m, &[], 10, 0), Err(EvalError::EmptySplit)));
    }

    #[test]
    fn tables_have_expected_schema() {
        let dir = tempfile::tempdir().unwrap();
        let r = MetricReport {
            model: "nhp".into(),
            dataset: "syn".into(),
            dev_nll: 1.0,
            next_type_accuracy: 0.35,
            intensity_accuracy: None,
            next_time_rmse: 0.5,
            otd_short: 0.25,
            otd_long: 0.75,
        };
        let paths = emit_tables(&[r], &[], dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let otd = std::fs::read_to_string(dir.path().join("otd_syn.csv")).unwrap();
        assert_eq!(otd, "model,otd_short,otd_long\nnhp,0.250000,0.750000\n");
        let acc = std::fs::read_to_string(dir.path().join("accuracy_table.csv")).unwrap();
        assert!(acc.ends_with("nhp,syn,1.000000,0.350000,,0.500000\n"));
    }
}
