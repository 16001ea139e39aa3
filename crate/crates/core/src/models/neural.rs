//! RMTPP, NHP, THP and the intensity-free model on top of the autodiff
//! graph.
//!
//! Every encoder prepends a begin-of-sequence position (the pad embedding at
//! time 0), so a batch with `L` event slots yields `L + 1` states: state `p`
//! has consumed the first `p` events and parameterizes the law of event
//! `p + 1` on the interval after `t_p` (`t_0 = 0`).

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use amberflag_autodiff::{softplus, AdamState, Checkpoint, Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::law::{ConditionalIntensity, LogNormalMixture, NextEventLaw, TimeLaw, MIN_GAP};
use super::math::{log_normal_sf_op, LN_SQRT_2PI};
use super::{IntensityModel, ModelError, Result};
use crate::event::{Event, EventSequence, EventTypeCatalog, PaddedBatch};
use crate::seeds;

pub const MODEL_CHECKPOINT_FORMAT: &str = "amberflag-model";

/// Masked attention logits are shifted by this, so their weights are exactly 0.
const MASK_BIAS: f64 = -1e30;
const LAYER_NORM_EPS: f64 = 1e-5;
/// The expected-time quadrature covers this many mean gaps.
const HORIZON_GAPS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "rmtpp")]
    Rmtpp,
    #[serde(rename = "nhp")]
    Nhp,
    #[serde(rename = "thp")]
    Thp,
    #[serde(rename = "if")]
    IntensityFree,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Nhp, ModelKind::Rmtpp, ModelKind::Thp, ModelKind::IntensityFree];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rmtpp => "rmtpp",
            ModelKind::Nhp => "nhp",
            ModelKind::Thp => "thp",
            ModelKind::IntensityFree => "if",
        }
    }

    pub fn is_intensity(self) -> bool {
        self != ModelKind::IntensityFree
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmtpp" => Ok(ModelKind::Rmtpp),
            "nhp" => Ok(ModelKind::Nhp),
            "thp" => Ok(ModelKind::Thp),
            "if" | "intensity-free" | "intensityfree" => Ok(ModelKind::IntensityFree),
            other => Err(ModelError::UnknownKind(other.to_string())),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_types: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mixtures: usize,
    /// Mean inter-event gap of the training data, hours.
    pub mean_gap: f64,
    /// Mean and standard deviation of log gaps, used to standardize the
    /// intensity-free model's target.
    pub log_gap_mean: f64,
    pub log_gap_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Rmtpp,
            num_types: 1,
            embed_dim: 16,
            hidden_dim: 32,
            heads: 2,
            layers: 1,
            mixtures: 3,
            mean_gap: 1.0,
            log_gap_mean: 0.0,
            log_gap_std: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, num_types: usize) -> Self {
        Self {
            kind,
            num_types,
            ..Self::default()
        }
    }

    /// Gap statistics from `seqs`, counting the gap from the origin to the
    /// first event.
    pub fn with_gap_stats(mut self, seqs: &[EventSequence]) -> Self {
        let mut gaps = Vec::new();
        for s in seqs {
            let mut last = 0.0;
            for e in &s.events {
                gaps.push(e.t - last);
                last = e.t;
            }
        }
        if gaps.is_empty() {
            return self;
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        if mean > 0.0 {
            self.mean_gap = mean;
        }
        let logs: Vec<f64> = gaps.iter().filter(|&&g| g > 0.0).map(|g| g.ln()).collect();
        if logs.len() >= 2 {
            let m = logs.iter().sum::<f64>() / logs.len() as f64;
            let var = logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
            self.log_gap_mean = m;
            self.log_gap_std = var.sqrt().max(1e-3);
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.num_types, self.embed_dim, self.hidden_dim, self.heads, self.layers, self.mixtures];
        if dims.contains(&0) {
            return Err(ModelError::ConfigMismatch(format!("all dimensions must be >= 1: {self:?}")));
        }
        if self.kind == ModelKind::Thp && !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(ModelError::ConfigMismatch(format!(
                "hidden_dim {} not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if !(self.mean_gap > 0.0 && self.log_gap_std > 0.0) {
            return Err(ModelError::ConfigMismatch("gap statistics must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sequence uniform fractions locating Monte-Carlo sample times inside
/// each interval. Draws depend only on the seed and the sequence id, so
/// padding and batch order leave them unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct McDraws {
    pub samples: usize,
    /// `B x (L + 1) x S`; intervals past a row's end hold 0.5.
    pub fractions: Vec<f64>,
}

impl McDraws {
    pub fn new(batch: &PaddedBatch, samples: usize, seed: u64) -> Self {
        let l1 = batch.max_len + 1;
        let mut fractions = vec![0.5; batch.batch_size * l1 * samples];
        for b in 0..batch.batch_size {
            let row = Self::for_sequence(seed, &batch.seq_ids[b], batch.lengths[b] + 1, samples);
            fractions[b * l1 * samples..b * l1 * samples + row.len()].copy_from_slice(&row);
        }
        Self { samples, fractions }
    }

    /// `intervals x samples` fractions for one sequence.
    pub fn for_sequence(seed: u64, seq_id: &str, intervals: usize, samples: usize) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::for_sequence(seed, seq_id));
        (0..intervals * samples).map(|_| rng.random::<f64>()).collect()
    }
}

struct CtState<'g> {
    c: Tensor<'g>,
    cbar: Tensor<'g>,
    delta: Tensor<'g>,
    o: Tensor<'g>,
}

/// Encoder states for a batch.
pub struct Encoded<'g> {
    /// `[B, L + 1, H]`.
    pub hidden: Tensor<'g>,
    ct: Option<CtState<'g>>,
    pub batch_size: usize,
    pub positions: usize,
    /// Time of each position, `B x (L + 1)`, position 0 at the origin.
    pub times: Vec<f64>,
}

impl<'g> Encoded<'g> {
    /// States after each real event, `[B, L, H]` (drops the initial state).
    pub fn event_states(&self) -> amberflag_autodiff::Result<Tensor<'g>> {
        self.hidden.slice(1, 1, self.positions)
    }
}

/// Event and compensator terms of the log-likelihood, summed over a batch.
pub struct NllTerms<'g> {
    pub event_term: Tensor<'g>,
    pub compensator: Tensor<'g>,
    pub num_events: usize,
}

impl<'g> NllTerms<'g> {
    /// `compensator − event_term`, summed (not normalized).
    pub fn nll(&self) -> amberflag_autodiff::Result<Tensor<'g>> {
        self.compensator.sub(self.event_term)
    }
}

/// Flattened per-position layout shared by the likelihood and law paths.
struct Layout {
    b: usize,
    l1: usize,
    types_in: Vec<usize>,
    times_in: Vec<f64>,
    gaps_in: Vec<f64>,
}

impl Layout {
    fn new(batch: &PaddedBatch) -> Self {
        let (b, l) = (batch.batch_size, batch.max_len);
        let l1 = l + 1;
        let mut types_in = vec![0; b * l1];
        let mut times_in = vec![0.0; b * l1];
        let mut gaps_in = vec![0.0; b * l1];
        for r in 0..b {
            for p in 1..l1 {
                let at = r * l1 + p;
                types_in[at] = batch.type_at(r, p - 1);
                times_in[at] = batch.time(r, p - 1);
                gaps_in[at] = times_in[at] - times_in[at - 1];
            }
        }
        Self {
            b,
            l1,
            types_in,
            times_in,
            gaps_in,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn uniform(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, shape: &[usize]) {
    store.uniform(name, shape, shape[0], rng);
}

impl NeuralModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, "init", 0));
        let mut s = ParamStore::new();
        let (k, d, h) = (config.num_types, config.embed_dim, config.hidden_dim);
        let vocab = k + 1;
        match config.kind {
            ModelKind::Rmtpp | ModelKind::IntensityFree => {
                uniform(&mut s, &mut rng, "emb", &[vocab, d]);
                uniform(&mut s, &mut rng, "gru_wx", &[d + 2, 3 * h]);
                s.zeros("gru_b", &[3 * h]);
                uniform(&mut s, &mut rng, "gru_wh_zr", &[h, 2 * h]);
                uniform(&mut s, &mut rng, "gru_wh_n", &[h, h]);
            }
            ModelKind::Nhp => {
                uniform(&mut s, &mut rng, "emb", &[vocab, d]);
                uniform(&mut s, &mut rng, "ct_wx", &[d, 7 * h]);
                uniform(&mut s, &mut rng, "ct_wh", &[h, 7 * h]);
                s.zeros("ct_b", &[7 * h]);
            }
            ModelKind::Thp => {
                uniform(&mut s, &mut rng, "emb", &[vocab, h]);
                for layer in 0..config.layers {
                    for m in ["q", "k", "v", "o"] {
                        uniform(&mut s, &mut rng, &format!("attn{layer}_{m}"), &[h, h]);
                    }
                    uniform(&mut s, &mut rng, &format!("ffn{layer}_w1"), &[h, 2 * h]);
                    s.zeros(format!("ffn{layer}_b1"), &[2 * h]);
                    uniform(&mut s, &mut rng, &format!("ffn{layer}_w2"), &[2 * h, h]);
                    s.zeros(format!("ffn{layer}_b2"), &[h]);
                }
            }
        }
        match config.kind {
            ModelKind::Rmtpp => {
                uniform(&mut s, &mut rng, "out_v", &[h, k]);
                s.zeros("out_b", &[k]);
                s.zeros("out_w", &[]);
            }
            ModelKind::Nhp => {
                uniform(&mut s, &mut rng, "out_w", &[h, k]);
                s.zeros("out_b", &[k]);
            }
            ModelKind::Thp => {
                uniform(&mut s, &mut rng, "out_v", &[h, k]);
                s.zeros("out_b", &[k]);
                s.zeros("out_a", &[k]);
            }
            ModelKind::IntensityFree => {
                let m = config.mixtures;
                for name in ["mix_logit", "mix_loc", "mix_scale"] {
                    uniform(&mut s, &mut rng, &format!("{name}_w"), &[h, m]);
                    s.zeros(format!("{name}_b"), &[m]);
                }
                uniform(&mut s, &mut rng, "type_w", &[h, k]);
                s.zeros("type_b", &[k]);
            }
        }
        if config.kind.is_intensity() {
            uniform(&mut s, &mut rng, "head_w1", &[h, h]);
            s.zeros("head_b1", &[h]);
            uniform(&mut s, &mut rng, "head_w2", &[h, k]);
            s.zeros("head_b2", &[k]);
        }
        Ok(Self { config, params: s })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    fn catalog(&self) -> EventTypeCatalog {
        EventTypeCatalog::generic(self.config.num_types)
    }

    /// A batch over this model's type vocabulary.
    pub fn batch(&self, seqs: &[&EventSequence]) -> Result<PaddedBatch> {
        PaddedBatch::from_refs(seqs, &self.catalog(), 0).map_err(|e| ModelError::ConfigMismatch(e.to_string()))
    }

    fn check_batch(&self, batch: &PaddedBatch) -> Result<()> {
        match batch.types.iter().find(|&&t| t > self.config.num_types) {
            Some(t) => Err(ModelError::ConfigMismatch(format!(
                "event type {t} outside a {}-type model",
                self.config.num_types
            ))),
            None => Ok(()),
        }
    }

    fn p<'g>(g: &'g Graph, store: &ParamStore, name: &str) -> Tensor<'g> {
        let id = store.find(name).unwrap_or_else(|| panic!("missing parameter {name}"));
        g.param(store, id)
    }

    pub fn encode<'g>(&self, g: &'g Graph, store: &ParamStore, batch: &PaddedBatch) -> Result<Encoded<'g>> {
        self.check_batch(batch)?;
        let lay = Layout::new(batch);
        self.encode_layout(g, store, &lay)
    }

    fn encode_layout<'g>(&self, g: &'g Graph, store: &ParamStore, lay: &Layout) -> Result<Encoded<'g>> {
        let (hidden, ct) = match self.config.kind {
            ModelKind::Rmtpp | ModelKind::IntensityFree => (self.encode_gru(g, store, lay)?, None),
            ModelKind::Nhp => {
                let (hidden, ct) = self.encode_ct(g, store, lay)?;
                (hidden, Some(ct))
            }
            ModelKind::Thp => (self.encode_attention(g, store, lay)?, None),
        };
        Ok(Encoded {
            hidden,
            ct,
            batch_size: lay.b,
            positions: lay.l1,
            times: lay.times_in.clone(),
        })
    }

    fn position<'g>(x: Tensor<'g>, p: usize, b: usize, width: usize) -> amberflag_autodiff::Result<Tensor<'g>> {
        x.slice(1, p, p + 1)?.reshape(&[b, width])
    }

    fn stack<'g>(g: &'g Graph, states: &[Tensor<'g>], b: usize, width: usize) -> amberflag_autodiff::Result<Tensor<'g>> {
        let rows = states.iter().map(|s| s.reshape(&[b, 1, width])).collect::<amberflag_autodiff::Result<Vec<_>>>()?;
        g.concat(&rows, 1)
    }

    /// Gated recurrent cell over the type embedding and two gap features.
    fn encode_gru<'g>(&self, g: &'g Graph, store: &ParamStore, lay: &Layout) -> Result<Tensor<'g>> {
        let (b, l1, h) = (lay.b, lay.l1, self.config.hidden_dim);
        let emb = g.embedding(Self::p(g, store, "emb"), &lay.types_in)?;
        let scale = self.config.mean_gap;
        let feats: Vec<f64> = lay.gaps_in.iter().flat_map(|&gap| [gap / scale, (gap / scale).ln_1p()]).collect();
        let x = g.concat(&[emb, g.constant(&[b * l1, 2], feats)?], 1)?;
        let xw = x
            .matmul(Self::p(g, store, "gru_wx"))?
            .add(Self::p(g, store, "gru_b"))?
            .reshape(&[b, l1, 3 * h])?;
        let wh_zr = Self::p(g, store, "gru_wh_zr");
        let wh_n = Self::p(g, store, "gru_wh_n");
        let mut state = g.full(&[b, h], 0.0)?;
        let mut states = Vec::with_capacity(l1);
        for p in 0..l1 {
            let xp = Self::position(xw, p, b, 3 * h)?;
            let zr = xp.slice(1, 0, 2 * h)?.add(state.matmul(wh_zr)?)?.sigmoid()?;
            let z = zr.slice(1, 0, h)?;
            let r = zr.slice(1, h, 2 * h)?;
            let n = xp.slice(1, 2 * h, 3 * h)?.add(r.mul(state)?.matmul(wh_n)?)?.tanh()?;
            state = n.add(z.mul(state.sub(n)?)?)?;
            states.push(state);
        }
        Ok(Self::stack(g, &states, b, h)?)
    }

    /// Continuous-time LSTM: between events each cell decays from `c`
    /// toward the target `c̄` at rate `δ`.
    fn encode_ct<'g>(&self, g: &'g Graph, store: &ParamStore, lay: &Layout) -> Result<(Tensor<'g>, CtState<'g>)> {
        let (b, l1, h) = (lay.b, lay.l1, self.config.hidden_dim);
        let emb = g.embedding(Self::p(g, store, "emb"), &lay.types_in)?;
        let xw = emb
            .matmul(Self::p(g, store, "ct_wx"))?
            .add(Self::p(g, store, "ct_b"))?
            .reshape(&[b, l1, 7 * h])?;
        let wh = Self::p(g, store, "ct_wh");
        let zeros = g.full(&[b, h], 0.0)?;
        let (mut c, mut cbar, mut delta, mut o) = (zeros, zeros, zeros, zeros);
        let mut seq = [Vec::with_capacity(l1), Vec::with_capacity(l1), Vec::with_capacity(l1), Vec::with_capacity(l1)];
        let mut hidden = Vec::with_capacity(l1);
        for p in 0..l1 {
            let (c_t, h_t) = if p == 0 {
                (zeros, zeros)
            } else {
                let gaps: Vec<f64> = (0..b).map(|r| lay.gaps_in[r * l1 + p] / self.config.mean_gap).collect();
                let decay = delta.mul(g.constant(&[b, 1], gaps)?)?.neg()?.exp()?;
                let c_t = cbar.add(c.sub(cbar)?.mul(decay)?)?;
                (c_t, o.mul(c_t.tanh()?)?)
            };
            let pre = Self::position(xw, p, b, 7 * h)?.add(h_t.matmul(wh)?)?;
            let gates = pre.slice(1, 0, 5 * h)?.sigmoid()?;
            let gate = |i: usize| gates.slice(1, i * h, (i + 1) * h);
            let (ig, fg, ibar, fbar) = (gate(0)?, gate(1)?, gate(2)?, gate(3)?);
            o = gate(4)?;
            let z = pre.slice(1, 5 * h, 6 * h)?.tanh()?;
            delta = pre.slice(1, 6 * h, 7 * h)?.softplus()?;
            c = fg.mul(c_t)?.add(ig.mul(z)?)?;
            cbar = fbar.mul(cbar)?.add(ibar.mul(z)?)?;
            hidden.push(o.mul(c.tanh()?)?);
            for (dst, src) in seq.iter_mut().zip([c, cbar, delta, o]) {
                dst.push(src);
            }
        }
        let [cs, cbars, deltas, os] = seq;
        Ok((
            Self::stack(g, &hidden, b, h)?,
            CtState {
                c: Self::stack(g, &cs, b, h)?,
                cbar: Self::stack(g, &cbars, b, h)?,
                delta: Self::stack(g, &deltas, b, h)?,
                o: Self::stack(g, &os, b, h)?,
            },
        ))
    }

    fn layer_norm<'g>(x: Tensor<'g>, b: usize, l1: usize) -> amberflag_autodiff::Result<Tensor<'g>> {
        let mean = x.mean(2)?.reshape(&[b, l1, 1])?;
        let centered = x.sub(mean)?;
        let inv_std = centered
            .square()?
            .mean(2)?
            .reshape(&[b, l1, 1])?
            .add_scalar(LAYER_NORM_EPS)?
            .powf(-0.5)?;
        centered.mul(inv_std)
    }

    /// Causal self-attention over type embeddings plus a sinusoidal encoding
    /// of event time.
    fn encode_attention<'g>(&self, g: &'g Graph, store: &ParamStore, lay: &Layout) -> Result<Tensor<'g>> {
        let (b, l1, h) = (lay.b, lay.l1, self.config.hidden_dim);
        let heads = self.config.heads;
        let dh = h / heads;
        let mut pe = Vec::with_capacity(b * l1 * h);
        for &t in &lay.times_in {
            let t = t / self.config.mean_gap;
            for j in 0..h {
                let freq = 10000f64.powf(-((j / 2 * 2) as f64) / h as f64);
                pe.push(if j % 2 == 0 { (t * freq).sin() } else { (t * freq).cos() });
            }
        }
        let emb = g.embedding(Self::p(g, store, "emb"), &lay.types_in)?.reshape(&[b, l1, h])?;
        let mut x = emb.add(g.constant(&[b, l1, h], pe)?)?;
        let mask: Vec<f64> = (0..l1 * l1).map(|idx| if idx % l1 <= idx / l1 { 0.0 } else { MASK_BIAS }).collect();
        let mask = g.constant(&[l1, l1], mask)?;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        for layer in 0..self.config.layers {
            let proj = |m: &str| x.matmul(Self::p(g, store, &format!("attn{layer}_{m}")));
            let (q, k, v) = (proj("q")?, proj("k")?, proj("v")?);
            let mut outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (lo, hi) = (hd * dh, (hd + 1) * dh);
                let scores = q
                    .slice(2, lo, hi)?
                    .batch_matmul(k.slice(2, lo, hi)?.transpose_last2()?)?
                    .scale(inv_sqrt)?
                    .add(mask)?;
                outs.push(scores.softmax(2)?.batch_matmul(v.slice(2, lo, hi)?)?);
            }
            let att = g.concat(&outs, 2)?.matmul(Self::p(g, store, &format!("attn{layer}_o")))?;
            x = Self::layer_norm(x.add(att)?, b, l1)?;
            let ffn = x
                .matmul(Self::p(g, store, &format!("ffn{layer}_w1")))?
                .add(Self::p(g, store, &format!("ffn{layer}_b1")))?
                .relu()?
                .matmul(Self::p(g, store, &format!("ffn{layer}_w2")))?
                .add(Self::p(g, store, &format!("ffn{layer}_b2")))?;
            x = Self::layer_norm(x.add(ffn)?, b, l1)?;
        }
        Ok(x)
    }

    /// Per-type rates at `gaps` hours after each position: `gaps` is
    /// `[B, L + 1, Q]`, the result `[B, L + 1, Q, K]`.
    pub fn rates_at<'g>(&self, g: &'g Graph, store: &ParamStore, enc: &Encoded<'g>, gaps: Vec<f64>, q: usize) -> Result<Tensor<'g>> {
        let (b, l1, k, h) = (enc.batch_size, enc.positions, self.config.num_types, self.config.hidden_dim);
        match self.config.kind {
            ModelKind::Rmtpp => {
                let base = enc
                    .hidden
                    .matmul(Self::p(g, store, "out_v"))?
                    .add(Self::p(g, store, "out_b"))?
                    .reshape(&[b, l1, 1, k])?;
                let drift = g.constant(&[b, l1, q, 1], gaps)?.mul(Self::p(g, store, "out_w"))?;
                Ok(drift.add(base)?.exp()?)
            }
            ModelKind::Thp => {
                let base = enc
                    .hidden
                    .matmul(Self::p(g, store, "out_v"))?
                    .add(Self::p(g, store, "out_b"))?
                    .reshape(&[b, l1, 1, k])?;
                let scaled: Vec<f64> = gaps
                    .iter()
                    .enumerate()
                    .map(|(i, &gap)| thp_time_feature(gap, enc.times[i / q]))
                    .collect();
                let drift = g.constant(&[b, l1, q, 1], scaled)?.mul(Self::p(g, store, "out_a"))?;
                Ok(drift.add(base)?.softplus()?)
            }
            ModelKind::Nhp => {
                let ct = enc.ct.as_ref().expect("continuous-time state");
                let four = |t: Tensor<'g>| t.reshape(&[b, l1, 1, h]);
                let (c, cbar, delta, o) = (four(ct.c)?, four(ct.cbar)?, four(ct.delta)?, four(ct.o)?);
                let scaled: Vec<f64> = gaps.iter().map(|g| g / self.config.mean_gap).collect();
                let decay = g.constant(&[b, l1, q, 1], scaled)?.mul(delta)?.neg()?.exp()?;
                let c_t = cbar.add(c.sub(cbar)?.mul(decay)?)?;
                Ok(o
                    .mul(c_t.tanh()?)?
                    .matmul(Self::p(g, store, "out_w"))?
                    .add(Self::p(g, store, "out_b"))?
                    .softplus()?)
            }
            ModelKind::IntensityFree => Err(ModelError::UnsupportedForIF),
        }
    }

    /// Mixture parameters `[B, L + 1, M]` in standardized log-gap units:
    /// log weights, locations, log scales.
    fn mixture<'g>(&self, g: &'g Graph, store: &ParamStore, enc: &Encoded<'g>) -> Result<(Tensor<'g>, Tensor<'g>, Tensor<'g>)> {
        let lin = |name: &str| {
            enc.hidden
                .matmul(Self::p(g, store, &format!("{name}_w")))?
                .add(Self::p(g, store, &format!("{name}_b")))
        };
        Ok((lin("mix_logit")?.log_softmax(2)?, lin("mix_loc")?, lin("mix_scale")?))
    }

    fn type_log_probs<'g>(&self, g: &'g Graph, store: &ParamStore, enc: &Encoded<'g>) -> Result<Tensor<'g>> {
        Ok(enc
            .hidden
            .matmul(Self::p(g, store, "type_w"))?
            .add(Self::p(g, store, "type_b"))?
            .log_softmax(2)?)
    }

    /// Logits of the classification head on detached states.
    fn head_logits<'g>(&self, g: &'g Graph, store: &ParamStore, enc: &Encoded<'g>) -> Result<Tensor<'g>> {
        Ok(enc
            .hidden
            .detach()
            .matmul(Self::p(g, store, "head_w1"))?
            .add(Self::p(g, store, "head_b1"))?
            .tanh()?
            .matmul(Self::p(g, store, "head_w2"))?
            .add(Self::p(g, store, "head_b2"))?)
    }

    /// Log-likelihood terms over `[0, T_obs]` for every row of `batch`,
    /// including the first event and the survival to `T_obs` after the last.
    pub fn nll_terms<'g>(&self, g: &'g Graph, store: &ParamStore, batch: &PaddedBatch, draws: &McDraws) -> Result<(NllTerms<'g>, Encoded<'g>)> {
        self.check_batch(batch)?;
        let lay = Layout::new(batch);
        let enc = self.encode_layout(g, store, &lay)?;
        let (b, l1, k) = (lay.b, lay.l1, self.config.num_types);
        let s = draws.samples;
        // per position: next type (0-based), event mask, interval length
        let mut next_type = vec![0; b * l1];
        let mut event_mask = vec![0.0; b * l1];
        let mut event_gap = vec![0.0; b * l1];
        let mut interval = vec![0.0; b * l1];
        for r in 0..b {
            let n = batch.lengths[r];
            for p in 0..=n {
                let at = r * l1 + p;
                let start = lay.times_in[at];
                if p < n {
                    next_type[at] = lay.types_in[at + 1] - 1;
                    event_mask[at] = 1.0;
                    event_gap[at] = lay.times_in[at + 1] - start;
                    interval[at] = event_gap[at];
                } else {
                    interval[at] = batch.t_obs[r] - start;
                }
            }
        }
        let terms = if self.config.kind.is_intensity() {
            let q = s + 1;
            let mut gaps = vec![0.0; b * l1 * q];
            for at in 0..b * l1 {
                gaps[at * q] = event_gap[at];
                for j in 0..s {
                    gaps[at * q + 1 + j] = draws.fractions[at * s + j] * interval[at];
                }
            }
            let rates = self.rates_at(g, store, &enc, gaps, q)?;
            let event_term = rates
                .slice(2, 0, 1)?
                .reshape(&[b * l1, k])?
                .gather_last(&next_type)?
                .log()?
                .mul(g.constant(&[b * l1], event_mask)?)?
                .sum_all()?;
            let compensator = rates
                .slice(2, 1, q)?
                .sum(3)?
                .mean(2)?
                .reshape(&[b * l1])?
                .mul(g.constant(&[b * l1], interval)?)?
                .sum_all()?;
            NllTerms {
                event_term,
                compensator,
                num_events: batch.num_events(),
            }
        } else {
            let (a, sd) = (self.config.log_gap_mean, self.config.log_gap_std);
            let (log_w, loc, log_scale) = self.mixture(g, store, &enc)?;
            let scale = log_scale.exp()?;
            let standardized = |gaps: &[f64]| -> Vec<f64> { gaps.iter().map(|&x| (x.max(MIN_GAP).ln() - a) / sd).collect() };
            // density of the standardized log gap, then the change of variables
            let dummy: Vec<f64> = event_gap.iter().zip(&event_mask).map(|(&x, &m)| if m > 0.0 { x } else { 1.0 }).collect();
            let y = g.constant(&[b, l1, 1], standardized(&dummy))?;
            let z = y.sub(loc)?.div(scale)?;
            let log_density_y = z
                .square()?
                .scale(-0.5)?
                .sub(log_scale)?
                .add_scalar(-LN_SQRT_2PI)?
                .add(log_w)?
                .logsumexp(2)?
                .reshape(&[b * l1])?;
            let jacobian: f64 = (0..b * l1)
                .filter(|&at| event_mask[at] > 0.0)
                .map(|at| -(sd.ln() + event_gap[at].max(MIN_GAP).ln()))
                .sum();
            let mask = g.constant(&[b * l1], event_mask.clone())?;
            let time_term = log_density_y.mul(mask)?.sum_all()?.add_scalar(jacobian)?;
            let type_term = self
                .type_log_probs(g, store, &enc)?
                .reshape(&[b * l1, k])?
                .gather_last(&next_type)?
                .mul(mask)?
                .sum_all()?;
            let tail_mask: Vec<f64> = (0..b * l1)
                .map(|at| {
                    let r = at / l1;
                    f64::from(u8::from(at % l1 == batch.lengths[r] && interval[at] > 0.0))
                })
                .collect();
            let tail_gap: Vec<f64> = (0..b * l1).map(|at| if tail_mask[at] > 0.0 { interval[at] } else { 1.0 }).collect();
            let yt = g.constant(&[b, l1, 1], standardized(&tail_gap))?;
            let log_surv = log_normal_sf_op(yt.sub(loc)?.div(scale)?)?
                .add(log_w)?
                .logsumexp(2)?
                .reshape(&[b * l1])?
                .mul(g.constant(&[b * l1], tail_mask)?)?
                .sum_all()?;
            NllTerms {
                event_term: time_term.add(type_term)?.add(log_surv)?,
                compensator: g.scalar(0.0)?,
                num_events: batch.num_events(),
            }
        };
        Ok((terms, enc))
    }

    /// Cross-entropy of the classification head (summed over real next
    /// events). `None` for the intensity-free model, whose type head is part
    /// of the likelihood.
    pub fn head_loss<'g>(&self, g: &'g Graph, store: &ParamStore, enc: &Encoded<'g>, batch: &PaddedBatch) -> Result<Option<Tensor<'g>>> {
        if !self.config.kind.is_intensity() {
            return Ok(None);
        }
        let (b, l1, k) = (enc.batch_size, enc.positions, self.config.num_types);
        let mut next_type = vec![0; b * l1];
        let mut mask = vec![0.0; b * l1];
        for r in 0..b {
            for p in 0..batch.lengths[r] {
                next_type[r * l1 + p] = batch.type_at(r, p) - 1;
                mask[r * l1 + p] = 1.0;
            }
        }
        let ll = self
            .head_logits(g, store, enc)?
            .log_softmax(2)?
            .reshape(&[b * l1, k])?
            .gather_last(&next_type)?
            .mul(g.constant(&[b * l1], mask)?)?
            .sum_all()?;
        Ok(Some(ll.neg()?))
    }

    /// Laws at every position of every row, evaluated without gradients.
    fn laws_for(&self, prefixes: &[&[Event]], only_last: bool) -> Result<Vec<Vec<NextEventLaw>>> {
        let seqs: Vec<EventSequence> = prefixes
            .iter()
            .enumerate()
            .map(|(i, p)| EventSequence::new(format!("prefix{i}"), 0, p.to_vec(), p.last().map_or(0.0, |e| e.t)))
            .collect();
        let refs: Vec<&EventSequence> = seqs.iter().collect();
        let batch = self.batch(&refs)?;
        let g = Graph::new();
        let store = &self.params;
        let enc = self.encode(&g, store, &batch)?;
        let (b, l1, k, h) = (enc.batch_size, enc.positions, self.config.num_types, self.config.hidden_dim);
        let horizon = HORIZON_GAPS * self.config.mean_gap;
        let row = |v: &[f64], at: usize, w: usize| v[at * w..(at + 1) * w].to_vec();

        let head = match self.config.kind {
            ModelKind::IntensityFree => self.type_log_probs(&g, store, &enc)?.value(),
            _ => self.head_logits(&g, store, &enc)?.log_softmax(2)?.value(),
        };
        let base = match self.config.kind {
            ModelKind::Rmtpp | ModelKind::Thp => Some(
                enc.hidden
                    .matmul(Self::p(&g, store, "out_v"))?
                    .add(Self::p(&g, store, "out_b"))?
                    .value(),
            ),
            _ => None,
        };
        let ct = enc
            .ct
            .as_ref()
            .map(|ct| [ct.c.value(), ct.cbar.value(), ct.delta.value(), ct.o.value()]);
        let mixture = match self.config.kind {
            ModelKind::IntensityFree => {
                let (w, loc, ls) = self.mixture(&g, store, &enc)?;
                Some((w.value(), loc.value(), ls.value()))
            }
            _ => None,
        };
        let shared = |name: &str| Arc::new(store.get(store.find(name).expect("parameter")).data.clone());
        let (out_w, out_b, out_a, drift) = match self.config.kind {
            ModelKind::Nhp => (Some(shared("out_w")), Some(shared("out_b")), None, 0.0),
            ModelKind::Thp => (None, None, Some(shared("out_a")), 0.0),
            ModelKind::Rmtpp => (None, None, None, store.get(store.find("out_w").expect("parameter")).data[0]),
            ModelKind::IntensityFree => (None, None, None, 0.0),
        };

        let mut out = Vec::with_capacity(b);
        for r in 0..b {
            let n = batch.lengths[r];
            let positions: Vec<usize> = if only_last { vec![n] } else { (0..=n).collect() };
            let mut laws = Vec::with_capacity(positions.len());
            for p in positions {
                let at = r * l1 + p;
                let t_last = enc.times[at];
                let head_probs = Some(row(&head, at, k).iter().map(|l| l.exp()).collect());
                let time = match self.config.kind {
                    ModelKind::Rmtpp => TimeLaw::Intensity(Box::new(NeuralIntensity::Rmtpp {
                        base: row(base.as_ref().expect("base"), at, k),
                        w: drift,
                        t_last,
                    })),
                    ModelKind::Thp => TimeLaw::Intensity(Box::new(NeuralIntensity::Thp {
                        base: row(base.as_ref().expect("base"), at, k),
                        a: out_a.clone().expect("out_a"),
                        t_last,
                    })),
                    ModelKind::Nhp => {
                        let [c, cbar, delta, o] = ct.as_ref().expect("ct state");
                        TimeLaw::Intensity(Box::new(NeuralIntensity::Nhp {
                            c: row(c, at, h),
                            cbar: row(cbar, at, h),
                            delta: row(delta, at, h),
                            o: row(o, at, h),
                            w: out_w.clone().expect("out_w"),
                            b: out_b.clone().expect("out_b"),
                            mean_gap: self.config.mean_gap,
                            t_last,
                        }))
                    }
                    ModelKind::IntensityFree => {
                        let (w, loc, ls) = mixture.as_ref().expect("mixture");
                        let m = self.config.mixtures;
                        let (a, sd) = (self.config.log_gap_mean, self.config.log_gap_std);
                        TimeLaw::Density(LogNormalMixture::new(
                            row(w, at, m),
                            row(loc, at, m).iter().map(|l| a + sd * l).collect(),
                            row(ls, at, m).iter().map(|s| sd * s.exp()).collect(),
                        )?)
                    }
                };
                laws.push(NextEventLaw {
                    t_last,
                    horizon,
                    time,
                    head_probs,
                });
            }
            out.push(laws);
        }
        Ok(out)
    }

    /// Type distribution of the classification head after each prefix
    /// position of `events` (`events.len() + 1` rows).
    pub fn head_probs(&self, events: &[Event]) -> Result<Vec<Vec<f64>>> {
        let laws = self.laws_for(&[events], false)?.pop().unwrap_or_default();
        Ok(laws.into_iter().map(|l| l.head_probs.unwrap_or_default()).collect())
    }

    /// Checkpoint with the model kind and configuration in its header.
    pub fn checkpoint(&self, optimizer: Option<&AdamState>) -> Checkpoint {
        let meta = serde_json::json!({
            "format": MODEL_CHECKPOINT_FORMAT,
            "model": self.config.kind.name(),
            "config": self.config,
        });
        Checkpoint::new(meta, &self.params, optimizer)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ckpt.meta.get("config").cloned().unwrap_or_default())
            .map_err(|e| ModelError::ConfigMismatch(format!("checkpoint config: {e}")))?;
        let fresh = Self::new(config.clone())?;
        let params = ckpt.store();
        let layout = |s: &ParamStore| s.params().iter().map(|p| (p.name.clone(), p.shape.clone())).collect::<Vec<_>>();
        if layout(&params) != layout(&fresh.params) {
            return Err(ModelError::ConfigMismatch(format!(
                "checkpoint parameters do not match a {} model",
                config.kind
            )));
        }
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path, optimizer: Option<&AdamState>) -> Result<()> {
        Ok(self.checkpoint(optimizer).save(path)?)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<AdamState>)> {
        let ckpt = Checkpoint::load(path)?;
        let model = Self::from_checkpoint(&ckpt)?;
        Ok((model, ckpt.optimizer))
    }
}

/// The attention model's time feature: gap relative to the elapsed time,
/// or the raw gap when the last event is at the origin.
fn thp_time_feature(gap: f64, t_last: f64) -> f64 {
    if t_last > 0.0 {
        gap / t_last
    } else {
        gap
    }
}

/// Plain-float decoders mirroring [`NeuralModel::rates_at`].
enum NeuralIntensity {
    Rmtpp {
        base: Vec<f64>,
        w: f64,
        t_last: f64,
    },
    Thp {
        base: Vec<f64>,
        a: Arc<Vec<f64>>,
        t_last: f64,
    },
    Nhp {
        c: Vec<f64>,
        cbar: Vec<f64>,
        delta: Vec<f64>,
        o: Vec<f64>,
        w: Arc<Vec<f64>>,
        b: Arc<Vec<f64>>,
        mean_gap: f64,
        t_last: f64,
    },
}

impl ConditionalIntensity for NeuralIntensity {
    fn num_types(&self) -> usize {
        match self {
            NeuralIntensity::Rmtpp { base, .. } | NeuralIntensity::Thp { base, .. } => base.len(),
            NeuralIntensity::Nhp { b, .. } => b.len(),
        }
    }

    fn rates_into(&self, t: f64, out: &mut [f64]) {
        match self {
            NeuralIntensity::Rmtpp { base, w, t_last } => {
                let drift = (t - t_last) * w;
                for (o, b) in out.iter_mut().zip(base) {
                    *o = (drift + b).exp();
                }
            }
            NeuralIntensity::Thp { base, a, t_last } => {
                let x = thp_time_feature(t - t_last, *t_last);
                for ((o, b), a) in out.iter_mut().zip(base).zip(a.iter()) {
                    *o = softplus(x * a + b);
                }
            }
            NeuralIntensity::Nhp {
                c,
                cbar,
                delta,
                o,
                w,
                b,
                mean_gap,
                t_last,
            } => {
                let k = b.len();
                let gap = (t - t_last) / mean_gap;
                out.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..c.len() {
                    let decay = (-(gap * delta[j])).exp();
                    let h = o[j] * (cbar[j] + (c[j] - cbar[j]) * decay).tanh();
                    for (kk, v) in out.iter_mut().enumerate() {
                        *v += h * w[j * k + kk];
                    }
                }
                for (v, bias) in out.iter_mut().zip(b.iter()) {
                    *v = softplus(*v + bias);
                }
            }
        }
    }
}

impl IntensityModel for NeuralModel {
    fn name(&self) -> &str {
        self.config.kind.name()
    }

    fn num_types(&self) -> usize {
        self.config.num_types
    }

    fn mean_gap(&self) -> f64 {
        self.config.mean_gap
    }

    fn next_event_laws(&self, events: &[Event]) -> Result<Vec<NextEventLaw>> {
        Ok(self.laws_for(&[events], false)?.pop().unwrap_or_default())
    }

    fn last_laws(&self, prefixes: &[&[Event]]) -> Result<Vec<NextEventLaw>> {
        if prefixes.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.laws_for(prefixes, true)?.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, times: &[f64], types: &[usize], t_obs: f64) -> EventSequence {
        EventSequence::new(id, 0, times.iter().zip(types).map(|(&t, &k)| Event::new(t, k)).collect(), t_obs)
    }

    #[test]
    fn hidden_shape_contract() {
        for kind in ModelKind::ALL {
            let m = NeuralModel::new(ModelConfig::new(kind, 3)).unwrap();
            let s = seq("a", &[0.5, 1.2], &[1, 3], 2.0);
            let batch = m.batch(&[&s]).unwrap();
            let g = Graph::new();
            let enc = m.encode(&g, &m.params, &batch).unwrap();
            assert_eq!(enc.event_states().unwrap().shape(), vec![1, 2, 32], "{kind}");
            assert_eq!(enc.hidden.shape(), vec![1, 3, 32]);
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("sahp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn type_outside_vocabulary_is_rejected() {
        let m = NeuralModel::new(ModelConfig::new(ModelKind::Rmtpp, 2)).unwrap();
        let s = seq("a", &[0.5, 1.2], &[1, 2], 2.0);
        let batch = PaddedBatch::from_refs(&[&s], &EventTypeCatalog::generic(5), 0).unwrap();
        let mut bad = batch.clone();
        bad.types[1] = 5;
        let g = Graph::new();
        assert!(matches!(m.encode(&g, &m.params, &bad), Err(ModelError::ConfigMismatch(_))));
    }

    #[test]
    fn graph_and_plain_rates_agree() {
        for kind in [ModelKind::Rmtpp, ModelKind::Nhp, ModelKind::Thp] {
            let mut m = NeuralModel::new(ModelConfig::new(kind, 2).with_seed(3)).unwrap();
            // move the zero-initialized drift terms off zero
            for name in ["out_w", "out_a"] {
                if let Some(id) = m.params.find(name) {
                    if m.params.get(id).shape.len() <= 1 {
                        m.params.get_mut(id).data.iter_mut().for_each(|x| *x = 0.3);
                    }
                }
            }
            let s = seq("a", &[0.5, 1.2, 2.0], &[1, 2, 2], 3.0);
            let batch = m.batch(&[&s]).unwrap();
            let g = Graph::new();
            let enc = m.encode(&g, &m.params, &batch).unwrap();
            let gaps: Vec<f64> = (0..4).flat_map(|_| [0.0, 0.25, 1.5]).collect();
            let via_graph = m.rates_at(&g, &m.params, &enc, gaps, 3).unwrap().value();
            let laws = m.next_event_laws(&s.events).unwrap();
            for (p, law) in laws.iter().enumerate() {
                for (j, gap) in [0.0, 0.25, 1.5].iter().enumerate() {
                    let r = law.rates(law.t_last + gap).unwrap();
                    for k in 0..2 {
                        let want = via_graph[(p * 3 + j) * 2 + k];
                        assert!((r[k] - want).abs() <= 1e-12 * want.abs().max(1.0), "{kind} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn nhp_decay_limits() {
        let m = NeuralModel::new(ModelConfig::new(ModelKind::Nhp, 2).with_seed(1)).unwrap();
        let s = seq("a", &[0.5, 1.0], &[1, 2], 2.0);
        let laws = m.next_event_laws(&s.events).unwrap();
        let law = &laws[2];
        let TimeLaw::Intensity(f) = &law.time else { panic!("intensity law") };
        let at_event = f.rates(law.t_last);
        let near = f.rates(law.t_last + 1e-12);
        let far = f.rates(law.t_last + 1e6);
        let g = Graph::new();
        let batch = m.batch(&[&s]).unwrap();
        let enc = m.encode(&g, &m.params, &batch).unwrap();
        let ct = enc.ct.as_ref().unwrap();
        let (cbar, o) = (ct.cbar.value(), ct.o.value());
        let (h, k) = (32, 2);
        let w = &m.params.get(m.params.find("out_w").unwrap()).data;
        let target: Vec<f64> = (0..k)
            .map(|kk| softplus((0..h).map(|j| o[2 * h + j] * cbar[2 * h + j].tanh() * w[j * k + kk]).sum::<f64>()))
            .collect();
        for kk in 0..k {
            assert!((at_event[kk] - near[kk]).abs() < 1e-9);
            assert!((far[kk] - target[kk]).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        for kind in ModelKind::ALL {
            let m = NeuralModel::new(ModelConfig::new(kind, 4).with_seed(11)).unwrap();
            m.save(&path, None).unwrap();
            let (back, opt) = NeuralModel::load(&path).unwrap();
            assert_eq!(back.config, m.config);
            assert_eq!(back.params, m.params);
            assert!(opt.is_none());
        }
        let mut ck = NeuralModel::new(ModelConfig::new(ModelKind::Thp, 4)).unwrap().checkpoint(None);
        ck.meta["config"]["kind"] = serde_json::json!("rmtpp");
        assert!(matches!(NeuralModel::from_checkpoint(&ck), Err(ModelError::ConfigMismatch(_))));
    }
}
