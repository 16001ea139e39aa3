//! Command-line driver for the amber-flag toolkit.
//!
//! Every subcommand starts from built-in defaults, overlays an optional
//! `--config` TOML file (or a previous run's manifest) and then explicit
//! flags. Environment variables are never consulted. Each run writes a
//! `<command>.manifest.toml` into its output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use amberflag::evaluation::RolloutMode;
use amberflag::models::ModelKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use commands::{
    EvaluateConfig, ForecastConfig, IngestConfig, ReportConfig, SimulateConfig, Split, SynthReadingsConfig, TrainCmdConfig,
};
pub use error::{Category, CliError, Result};
use manifest::{load_config, Manifest};

#[derive(Debug, Parser)]
#[command(name = "amberflag", version, about = "Temporal point processes for clinical amber-flag events")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample synthetic sequences from a multivariate Hawkes process.
    Simulate(SimulateArgs),
    /// Generate raw biomarker readings for an invented cohort.
    SynthReadings(SynthReadingsArgs),
    /// Build and split a dataset from readings or a sequence file.
    Ingest(IngestArgs),
    /// Train neural models on a dataset.
    Train(TrainArgs),
    /// Held-out likelihood, next-event accuracy and forecast OTD tables.
    Evaluate(EvaluateArgs),
    /// Multi-event forecasts scored against the true continuation.
    Forecast(ForecastArgs),
    /// Merge evaluation outputs into one set of tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub adverse_last: bool,
}

#[derive(Debug, Args)]
pub struct SynthReadingsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "readings")]
    pub sequences: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub readings: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub onsets: Option<PathBuf>,
    #[arg(long)]
    pub window_hours: Option<f64>,
    #[arg(long)]
    pub dedup_hours: Option<f64>,
    #[arg(long)]
    pub no_downsample: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Comma-separated subset of nhp, rmtpp, thp, if.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long)]
    pub baselines: bool,
    #[arg(long)]
    pub prefixes: Option<usize>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Forecast length in events; repeat for several.
    #[arg(long = "horizon")]
    pub horizons: Vec<usize>,
    /// Wall-clock horizon in hours instead of an event count; repeatable.
    #[arg(long = "hours", conflicts_with = "horizons")]
    pub hours: Vec<f64>,
    #[arg(long)]
    pub expected: bool,
    #[arg(long)]
    pub prefixes: Option<usize>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn base<C: DeserializeOwned + Default>(config: &Option<PathBuf>, command: &str) -> Result<C> {
    match config {
        Some(path) => load_config(path, command),
        None => Ok(C::default()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig> {
        let mut c: SimulateConfig = base(&self.config, "simulate")?;
        if self.params.is_some() {
            c.params = self.params;
        }
        set(&mut c.t_end, self.t_end);
        set(&mut c.n, self.n);
        set(&mut c.seed, self.seed);
        set(&mut c.out, self.out);
        c.adverse_last |= self.adverse_last;
        Ok(c)
    }
}

impl SynthReadingsArgs {
    pub fn resolve(self) -> Result<SynthReadingsConfig> {
        let mut c: SynthReadingsConfig = base(&self.config, "synth-readings")?;
        set(&mut c.cohort.patients, self.patients);
        set(&mut c.cohort.seed, self.seed);
        set(&mut c.out, self.out);
        Ok(c)
    }
}

impl IngestArgs {
    pub fn resolve(self) -> Result<IngestConfig> {
        let mut c: IngestConfig = base(&self.config, "ingest")?;
        if self.sequences.is_some() {
            c.sequences = self.sequences;
            c.readings = None;
        }
        if self.readings.is_some() {
            c.readings = self.readings;
            c.sequences = None;
        }
        for (slot, v) in [(&mut c.catalog, self.catalog), (&mut c.rules, self.rules), (&mut c.onsets, self.onsets)] {
            if v.is_some() {
                *slot = v;
            }
        }
        set(&mut c.cohort.window_hours, self.window_hours);
        set(&mut c.cohort.dedup_hours, self.dedup_hours);
        c.downsample &= !self.no_downsample;
        set(&mut c.seed, self.seed);
        set(&mut c.out, self.out);
        Ok(c)
    }
}

impl TrainArgs {
    pub fn resolve(self) -> Result<TrainCmdConfig> {
        let mut c: TrainCmdConfig = base(&self.config, "train")?;
        set(&mut c.data, self.data);
        set(&mut c.out, self.out);
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        set(&mut c.models, self.models);
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.lr, self.lr);
        set(&mut c.train.mc_samples_per_interval, self.mc_samples);
        set(&mut c.seed, self.seed);
        Ok(c)
    }
}

impl EvaluateArgs {
    pub fn resolve(self) -> Result<EvaluateConfig> {
        let mut c: EvaluateConfig = base(&self.config, "evaluate")?;
        set(&mut c.data, self.data);
        set(&mut c.run, self.run);
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        set(&mut c.models, self.models);
        set(&mut c.split, self.split);
        c.baselines |= self.baselines;
        set(&mut c.eval.otd.max_prefixes, self.prefixes);
        set(&mut c.eval.otd.rollouts, self.rollouts);
        if let Some(s) = self.seed {
            c.eval.seed = s;
            c.eval.otd.seed = s;
        }
        Ok(c)
    }
}

impl ForecastArgs {
    pub fn resolve(self) -> Result<ForecastConfig> {
        let mut c: ForecastConfig = base(&self.config, "forecast")?;
        set(&mut c.data, self.data);
        set(&mut c.run, self.run);
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        set(&mut c.models, self.models);
        set(&mut c.split, self.split);
        if !self.horizons.is_empty() {
            c.horizons = self.horizons;
            c.hours.clear();
        }
        if !self.hours.is_empty() {
            c.hours = self.hours;
        }
        if self.expected {
            c.otd.mode = RolloutMode::Expected;
        }
        set(&mut c.otd.max_prefixes, self.prefixes);
        set(&mut c.otd.rollouts, self.rollouts);
        set(&mut c.otd.seed, self.seed);
        Ok(c)
    }
}

impl ReportArgs {
    pub fn resolve(self) -> Result<ReportConfig> {
        let mut c: ReportConfig = base(&self.config, "report")?;
        if !self.inputs.is_empty() {
            c.inputs = self.inputs;
        }
        set(&mut c.out, self.out);
        Ok(c)
    }
}

/// Runs one subcommand and writes its manifest. Returns the manifest path.
pub fn run(command: Command) -> Result<PathBuf> {
    let (manifest, dir): (Manifest, PathBuf) = match command {
        Command::Simulate(a) => {
            let c = a.resolve()?;
            (commands::simulate(&c)?, c.out)
        }
        Command::SynthReadings(a) => {
            let c = a.resolve()?;
            (commands::synth_readings(&c)?, c.out)
        }
        Command::Ingest(a) => {
            let c = a.resolve()?;
            (commands::ingest(&c)?, c.out)
        }
        Command::Train(a) => {
            let c = a.resolve()?;
            (commands::train_models(&c)?, c.out)
        }
        Command::Evaluate(a) => {
            let c = a.resolve()?;
            let dir = c.out.clone().unwrap_or_else(|| c.run.clone());
            (commands::evaluate(&c)?, dir)
        }
        Command::Forecast(a) => {
            let c = a.resolve()?;
            let dir = c.out.clone().unwrap_or_else(|| c.run.clone());
            (commands::forecast(&c)?, dir)
        }
        Command::Report(a) => {
            let c = a.resolve()?;
            (commands::report(&c)?, c.out)
        }
    };
    manifest.write(&dir)
}
