//! Event-sequence data model: type catalog, sequences, padded batches and
//! dataset splits.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved type id for padding (and the begin-of-sequence token of the
/// neural encoders). Never a real event type.
pub const PAD_ID: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("sequence {seq_id}: times not strictly increasing at position {index}")]
    NonMonotoneTimes { seq_id: String, index: usize },
    #[error("sequence {seq_id}: unknown event type {k}")]
    UnknownType { seq_id: String, k: usize },
    #[error("sequence {seq_id}: label {label} inconsistent with adverse-event placement")]
    LabelMismatch { seq_id: String, label: u8 },
    #[error("sequence {seq_id}: {len} events, need at least 2")]
    TooShort { seq_id: String, len: usize },
    #[error("sequence {seq_id}: event time {t} outside [0, {t_obs}]")]
    OutOfWindow { seq_id: String, t: f64, t_obs: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("duplicate seq_id {0}")]
    DuplicateSeqId(String),
    #[error("invalid catalog: {0}")]
    BadCatalog(String),
}

/// Event-type vocabulary. Type ids run `1..=k_total`; `0` is padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeCatalog {
    names: Vec<String>,
    adverse_id: Option<usize>,
}

impl EventTypeCatalog {
    pub fn new(names: Vec<String>, adverse_id: Option<usize>) -> Result<Self, EventError> {
        if names.is_empty() {
            return Err(EventError::BadCatalog("no event types".into()));
        }
        if let Some(a) = adverse_id {
            if a == PAD_ID || a > names.len() {
                return Err(EventError::BadCatalog(format!("adverse id {a} outside 1..={}", names.len())));
            }
        }
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(EventError::BadCatalog("duplicate type names".into()));
        }
        Ok(Self { names, adverse_id })
    }

    /// `k` anonymous types with no adverse event (plain synthetic data).
    pub fn generic(k: usize) -> Self {
        Self {
            names: (1..=k).map(|i| format!("type_{i}")).collect(),
            adverse_id: None,
        }
    }

    /// Amber-flag types `1..=n` followed by the adverse type `n + 1`.
    pub fn clinical(amber: Vec<String>, adverse: impl Into<String>) -> Result<Self, EventError> {
        let mut names = amber;
        names.push(adverse.into());
        let id = names.len();
        Self::new(names, Some(id))
    }

    /// Number of real (non-pad) types.
    pub fn k_total(&self) -> usize {
        self.names.len()
    }

    /// Embedding vocabulary size, pad row included.
    pub fn vocab_size(&self) -> usize {
        self.names.len() + 1
    }

    pub fn adverse_id(&self) -> Option<usize> {
        self.adverse_id
    }

    pub fn contains(&self, k: usize) -> bool {
        (1..=self.names.len()).contains(&k)
    }

    pub fn name(&self, k: usize) -> Option<&str> {
        k.checked_sub(1).and_then(|i| self.names.get(i)).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One event: time in hours since the sequence origin and its type id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub k: usize,
}

impl Event {
    pub fn new(t: f64, k: usize) -> Self {
        Self { t, k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub seq_id: String,
    /// 1 when the sequence ends in the adverse event, 0 otherwise.
    pub label: u8,
    pub events: Vec<Event>,
    /// End of the observation window, hours.
    pub t_obs: f64,
}

impl EventSequence {
    pub fn new(seq_id: impl Into<String>, label: u8, events: Vec<Event>, t_obs: f64) -> Self {
        Self {
            seq_id: seq_id.into(),
            label,
            events,
            t_obs,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.t)
    }

    /// Check every sequence invariant against `catalog`.
    pub fn validate(&self, catalog: &EventTypeCatalog) -> Result<(), EventError> {
        let seq_id = || self.seq_id.clone();
        if self.events.len() < 2 {
            return Err(EventError::TooShort {
                seq_id: seq_id(),
                len: self.events.len(),
            });
        }
        for (i, e) in self.events.iter().enumerate() {
            if !catalog.contains(e.k) {
                return Err(EventError::UnknownType { seq_id: seq_id(), k: e.k });
            }
            if i > 0 && e.t.partial_cmp(&self.events[i - 1].t) != Some(std::cmp::Ordering::Greater) {
                return Err(EventError::NonMonotoneTimes { seq_id: seq_id(), index: i });
            }
            if !(e.t >= 0.0 && e.t <= self.t_obs) {
                return Err(EventError::OutOfWindow {
                    seq_id: seq_id(),
                    t: e.t,
                    t_obs: self.t_obs,
                });
            }
        }
        let mismatch = || EventError::LabelMismatch {
            seq_id: seq_id(),
            label: self.label,
        };
        match (catalog.adverse_id(), self.label) {
            (None, 0) => {}
            (None, _) => return Err(mismatch()),
            (Some(a), 0) => {
                if self.events.iter().any(|e| e.k == a) {
                    return Err(mismatch());
                }
            }
            (Some(a), 1) => {
                let n = self.events.len();
                if self.events[n - 1].k != a || self.events[..n - 1].iter().any(|e| e.k == a) {
                    return Err(mismatch());
                }
            }
            _ => return Err(mismatch()),
        }
        Ok(())
    }
}

/// Returns `seq` unchanged when all invariants hold.
pub fn validate_sequence(seq: EventSequence, catalog: &EventTypeCatalog) -> Result<EventSequence, EventError> {
    seq.validate(catalog)?;
    Ok(seq)
}

/// Rear-padded rectangular batch, row-major `B x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub batch_size: usize,
    pub max_len: usize,
    pub times: Vec<f64>,
    pub types: Vec<usize>,
    pub seq_mask: Vec<bool>,
    /// `L x L`; entry `[i][j]` is set when position `i` may attend to `j`.
    pub attn_mask: Vec<bool>,
    pub lengths: Vec<usize>,
    pub t_obs: Vec<f64>,
    pub seq_ids: Vec<String>,
}

impl PaddedBatch {
    /// Pads to the longest sequence, or to `min_len` if that is longer.
    pub fn from_refs(seqs: &[&EventSequence], catalog: &EventTypeCatalog, min_len: usize) -> Result<Self, EventError> {
        if seqs.is_empty() {
            return Err(EventError::EmptyBatch);
        }
        let l = seqs.iter().map(|s| s.len()).max().unwrap_or(0).max(min_len);
        let b = seqs.len();
        let mut times = Vec::with_capacity(b * l);
        let mut types = Vec::with_capacity(b * l);
        let mut seq_mask = Vec::with_capacity(b * l);
        for s in seqs {
            if let Some(e) = s.events.iter().find(|e| !catalog.contains(e.k)) {
                return Err(EventError::UnknownType {
                    seq_id: s.seq_id.clone(),
                    k: e.k,
                });
            }
            let last = s.events.last().map_or(0.0, |e| e.t);
            for i in 0..l {
                match s.events.get(i) {
                    Some(e) => {
                        times.push(e.t);
                        types.push(e.k);
                        seq_mask.push(true);
                    }
                    None => {
                        times.push(last);
                        types.push(PAD_ID);
                        seq_mask.push(false);
                    }
                }
            }
        }
        let attn_mask = (0..l * l).map(|idx| idx % l <= idx / l).collect();
        Ok(Self {
            batch_size: b,
            max_len: l,
            times,
            types,
            seq_mask,
            attn_mask,
            lengths: seqs.iter().map(|s| s.len()).collect(),
            t_obs: seqs.iter().map(|s| s.t_obs).collect(),
            seq_ids: seqs.iter().map(|s| s.seq_id.clone()).collect(),
        })
    }

    pub fn time(&self, b: usize, i: usize) -> f64 {
        self.times[b * self.max_len + i]
    }

    pub fn type_at(&self, b: usize, i: usize) -> usize {
        self.types[b * self.max_len + i]
    }

    pub fn is_real(&self, b: usize, i: usize) -> bool {
        self.seq_mask[b * self.max_len + i]
    }

    /// Total number of real events.
    pub fn num_events(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Drop every masked entry, recovering the per-row event lists.
    pub fn unpad(&self) -> Vec<Vec<Event>> {
        (0..self.batch_size)
            .map(|b| {
                (0..self.max_len)
                    .filter(|&i| self.is_real(b, i))
                    .map(|i| Event::new(self.time(b, i), self.type_at(b, i)))
                    .collect()
            })
            .collect()
    }
}

pub fn pad_batch(seqs: &[EventSequence], catalog: &EventTypeCatalog) -> Result<PaddedBatch, EventError> {
    let refs: Vec<&EventSequence> = seqs.iter().collect();
    PaddedBatch::from_refs(&refs, catalog, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub dev: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            test: 0.15,
            dev: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, test: f64, dev: f64) -> Result<Self, EventError> {
        let r = Self { train, test, dev };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<(), EventError> {
        let all = [self.train, self.test, self.dev];
        if all.iter().any(|&x| !(x > 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(EventError::BadRatios((self.train, self.test, self.dev)));
        }
        Ok(())
    }

    /// (train, test, dev) sizes: test and dev floor-rounded, remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let test = floor(self.test);
        let dev = floor(self.dev);
        (n - test - dev, test, dev)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<EventSequence>,
    pub test: Vec<EventSequence>,
    pub dev: Vec<EventSequence>,
    pub split_seed: u64,
}

impl SplitDataset {
    pub fn all(&self) -> impl Iterator<Item = &EventSequence> {
        self.train.iter().chain(&self.test).chain(&self.dev)
    }
}

pub(crate) fn check_unique_ids<'a>(seqs: impl IntoIterator<Item = &'a EventSequence>) -> Result<(), EventError> {
    let mut seen = HashSet::new();
    for s in seqs {
        if !seen.insert(s.seq_id.as_str()) {
            return Err(EventError::DuplicateSeqId(s.seq_id.clone()));
        }
    }
    Ok(())
}

/// Seeded shuffle, then cut into train / test / dev.
pub fn split_dataset(mut seqs: Vec<EventSequence>, ratios: SplitRatios, seed: u64) -> Result<SplitDataset, EventError> {
    ratios.check()?;
    check_unique_ids(&seqs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seqs.shuffle(&mut rng);
    let (n_train, n_test, _) = ratios.sizes(seqs.len());
    let dev = seqs.split_off(n_train + n_test);
    let test = seqs.split_off(n_train);
    Ok(SplitDataset {
        train: seqs,
        test,
        dev,
        split_seed: seed,
    })
}
