//! Resolved configurations and the work each subcommand does.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amberflag::classical::{simulate_cohort, HawkesParams, PoissonParams};
use amberflag::evaluation::{build_report, emit_tables, otd_by_horizon, otd_by_hours, EvalConfig, LlCurve, MetricReport, OtdConfig};
use amberflag::ingest::{
    assemble_dataset, build_sequences, catalog_for, downsample_negatives, flag_events, read_onsets, read_readings, read_rules,
    reference_rules, synthesize_readings, write_onsets, write_readings, write_rules, CohortConfig, SyntheticCohort,
};
use amberflag::io::{read_sequences, write_sequences};
use amberflag::models::{IntensityModel, ModelConfig, ModelKind, NeuralModel};
use amberflag::seeds::derive;
use amberflag::training::{train, TrainConfig, TrainError};
use amberflag::event::split_dataset;
use amberflag::{EventSequence, EventTypeCatalog, SplitDataset, SplitRatios};
use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const CATALOG_FILE: &str = "catalog.json";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
const SPLITS: [&str; 3] = ["train", "test", "dev"];

fn model_file(run: &Path, kind: ModelKind) -> PathBuf {
    run.join(format!("{}.model.json", kind.name()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} {} does not exist", path.display())))
    }
}

fn write_catalog(catalog: &EventTypeCatalog, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(CATALOG_FILE);
    let text = serde_json::to_string_pretty(catalog).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn read_catalog(path: &Path) -> Result<EventTypeCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let raw: EventTypeCatalog = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    // re-run the constructor checks
    Ok(EventTypeCatalog::new(raw.names().to_vec(), raw.adverse_id())?)
}

fn dataset_name(explicit: &Option<String>, data: &Path) -> String {
    explicit.clone().unwrap_or_else(|| {
        data.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into())
    })
}

/// A split dataset directory as written by `ingest`.
pub struct DataDir {
    pub data: SplitDataset,
    pub catalog: EventTypeCatalog,
    pub files: Vec<PathBuf>,
}

pub fn load_data_dir(dir: &Path) -> Result<DataDir> {
    require(dir, "data directory")?;
    let catalog_path = dir.join(CATALOG_FILE);
    let catalog = read_catalog(&catalog_path)?;
    let mut files = vec![catalog_path];
    let mut parts = Vec::new();
    for name in SPLITS {
        let path = dir.join(format!("{name}.jsonl"));
        let seqs = read_sequences(&path)?;
        for s in &seqs {
            s.validate(&catalog)?;
        }
        parts.push(seqs);
        files.push(path);
    }
    let dev = parts.pop().unwrap_or_default();
    let test = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    Ok(DataDir {
        data: SplitDataset {
            train,
            test,
            dev,
            split_seed: 0,
        },
        catalog,
        files,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Dev,
}

impl Split {
    fn pick(self, d: &SplitDataset) -> &[EventSequence] {
        match self {
            Split::Train => &d.train,
            Split::Test => &d.test,
            Split::Dev => &d.dev,
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Hawkes parameter file (TOML).
    pub params: Option<PathBuf>,
    pub t_end: f64,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Treat the last type as the adverse event: samples stop at it.
    pub adverse_last: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            params: None,
            t_end: 12.0,
            n: 1000,
            seed: 0,
            out: "sim".into(),
            adverse_last: false,
        }
    }
}

pub fn simulate(cfg: &SimulateConfig) -> Result<Manifest> {
    let params_path = cfg.params.as_deref().ok_or_else(|| CliError::config("simulate needs a parameter file"))?;
    require(params_path, "parameter file")?;
    if !(cfg.t_end > 0.0) {
        return Err(CliError::config("t_end must be positive"));
    }
    let p = HawkesParams::load(params_path)?;
    let catalog = if cfg.adverse_last {
        let g = EventTypeCatalog::generic(p.k());
        EventTypeCatalog::new(g.names().to_vec(), Some(p.k()))?
    } else {
        EventTypeCatalog::generic(p.k())
    };
    let seqs = simulate_cohort(&p, &catalog, cfg.t_end, cfg.n, cfg.seed)?;
    create_dir(&cfg.out)?;
    let mut m = Manifest::new("simulate", cfg)?;
    m.seed("simulate", cfg.seed);
    m.input(params_path)?;
    let path = cfg.out.join(SEQUENCES_FILE);
    write_sequences(&seqs, &path)?;
    m.output(&path)?;
    m.output(&write_catalog(&catalog, &cfg.out)?)?;
    info!("wrote {} sequences to {}", seqs.len(), path.display());
    Ok(m)
}

// ---------------------------------------------------------- synth-readings

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthReadingsConfig {
    pub out: PathBuf,
    pub cohort: SyntheticCohort,
}

impl Default for SynthReadingsConfig {
    fn default() -> Self {
        Self {
            out: "readings".into(),
            cohort: SyntheticCohort::default(),
        }
    }
}

pub fn synth_readings(cfg: &SynthReadingsConfig) -> Result<Manifest> {
    let rules = reference_rules();
    let (readings, onsets) = synthesize_readings(&cfg.cohort, &rules);
    create_dir(&cfg.out)?;
    let mut m = Manifest::new("synth-readings", cfg)?;
    m.seed("cohort", cfg.cohort.seed);
    for (name, write) in [
        ("readings.csv", &(|p: &Path| write_readings(&readings, p)) as &dyn Fn(&Path) -> amberflag::ingest::Result<()>),
        ("rules.csv", &|p: &Path| write_rules(&rules, p)),
        ("onsets.csv", &|p: &Path| write_onsets(&onsets, p)),
    ] {
        let path = cfg.out.join(name);
        write(&path)?;
        m.output(&path)?;
    }
    info!("wrote {} readings for {} patients", readings.len(), cfg.cohort.patients);
    Ok(m)
}

// ------------------------------------------------------------------ ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Pre-built sequence file; alternative to readings.
    pub sequences: Option<PathBuf>,
    /// Catalog of `sequences`; defaults to the catalog beside it.
    pub catalog: Option<PathBuf>,
    pub readings: Option<PathBuf>,
    /// Threshold rules; the bundled reference rules when absent.
    pub rules: Option<PathBuf>,
    pub onsets: Option<PathBuf>,
    pub cohort: CohortConfig,
    /// Balance negatives to the positive count.
    pub downsample: bool,
    /// Train, test and dev fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            sequences: None,
            catalog: None,
            readings: None,
            rules: None,
            onsets: None,
            cohort: CohortConfig::default(),
            downsample: true,
            ratios: [0.7, 0.15, 0.15],
            seed: 0,
            out: "data".into(),
        }
    }
}

pub fn ingest(cfg: &IngestConfig) -> Result<Manifest> {
    let ratios = SplitRatios::new(cfg.ratios[0], cfg.ratios[1], cfg.ratios[2])?;
    let mut m = Manifest::new("ingest", cfg)?;
    let (seqs, catalog) = match (&cfg.sequences, &cfg.readings) {
        (Some(seq_path), None) => {
            require(seq_path, "sequence file")?;
            let cat_path = cfg
                .catalog
                .clone()
                .unwrap_or_else(|| seq_path.parent().unwrap_or(Path::new(".")).join(CATALOG_FILE));
            require(&cat_path, "catalog")?;
            let catalog = read_catalog(&cat_path)?;
            let seqs = read_sequences(seq_path)?;
            for s in &seqs {
                s.validate(&catalog)?;
            }
            m.input(seq_path)?;
            m.input(&cat_path)?;
            (seqs, catalog)
        }
        (None, Some(readings_path)) => {
            require(readings_path, "readings file")?;
            let rules = match &cfg.rules {
                Some(p) => {
                    require(p, "rules file")?;
                    m.input(p)?;
                    read_rules(p)?
                }
                None => reference_rules(),
            };
            let onsets = match &cfg.onsets {
                Some(p) => {
                    require(p, "onsets file")?;
                    m.input(p)?;
                    read_onsets(p)?
                }
                None => BTreeMap::new(),
            };
            let catalog = catalog_for(&rules, &cfg.cohort.adverse_name)?;
            let readings = read_readings(readings_path)?;
            m.input(readings_path)?;
            let flags = flag_events(&readings, &rules, cfg.cohort.dedup_hours)?;
            let (mut pos, neg) = build_sequences(&flags, &onsets, &cfg.cohort, &catalog)?;
            pos.extend(neg);
            (pos, catalog)
        }
        _ => return Err(CliError::config("ingest needs exactly one of `sequences` or `readings`")),
    };
    let (pos, neg): (Vec<_>, Vec<_>) = seqs.into_iter().partition(|s| s.label == 1);
    m.seed("split", cfg.seed);
    let data = if !pos.is_empty() && !neg.is_empty() {
        let neg = if cfg.downsample {
            let seed = derive(cfg.seed, "downsample", 0);
            m.seed("downsample", seed);
            downsample_negatives(pos.len(), neg, seed)
        } else {
            neg
        };
        assemble_dataset(pos, neg, ratios, cfg.seed, &catalog)?
    } else {
        let all = if pos.is_empty() { neg } else { pos };
        if all.is_empty() {
            return Err(CliError::data("no sequence with at least two events"));
        }
        split_dataset(all, ratios, cfg.seed)?
    };
    create_dir(&cfg.out)?;
    for (name, part) in SPLITS.iter().zip([&data.train, &data.test, &data.dev]) {
        let path = cfg.out.join(format!("{name}.jsonl"));
        write_sequences(part, &path)?;
        m.output(&path)?;
    }
    m.output(&write_catalog(&catalog, &cfg.out)?)?;
    info!(
        "{} train / {} test / {} dev sequences, {} event types",
        data.train.len(),
        data.test.len(),
        data.dev.len(),
        catalog.k_total()
    );
    Ok(m)
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mixtures: usize,
}

impl Default for ModelHyper {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self {
            embed_dim: d.embed_dim,
            hidden_dim: d.hidden_dim,
            heads: d.heads,
            layers: d.layers,
            mixtures: d.mixtures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub dataset: Option<String>,
    pub models: Vec<ModelKind>,
    /// Root seed; initialization and training seeds derive from it.
    pub seed: u64,
    pub model: ModelHyper,
    /// Its `seed` field is replaced by the derived training seed.
    pub train: TrainConfig,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self {
            data: "data".into(),
            out: "run".into(),
            dataset: None,
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            model: ModelHyper::default(),
            train: TrainConfig::default(),
        }
    }
}

pub fn train_models(cfg: &TrainCmdConfig) -> Result<Manifest> {
    let dir = load_data_dir(&cfg.data)?;
    let dataset = dataset_name(&cfg.dataset, &cfg.data);
    let mut m = Manifest::new("train", cfg)?;
    for f in &dir.files {
        m.input(f)?;
    }
    create_dir(&cfg.out)?;
    let mut curves = Vec::new();
    for &kind in &cfg.models {
        let init_seed = derive(cfg.seed, "init", kind as u64);
        let train_seed = derive(cfg.seed, "train", kind as u64);
        m.seed(format!("{}.init", kind.name()), init_seed);
        m.seed(format!("{}.train", kind.name()), train_seed);
        let mc = ModelConfig {
            kind,
            num_types: dir.catalog.k_total(),
            embed_dim: cfg.model.embed_dim,
            hidden_dim: cfg.model.hidden_dim,
            heads: cfg.model.heads,
            layers: cfg.model.layers,
            mixtures: cfg.model.mixtures,
            ..ModelConfig::default()
        }
        .with_gap_stats(&dir.data.train)
        .with_seed(init_seed);
        let model = NeuralModel::new(mc)?;
        let tc = TrainConfig {
            seed: train_seed,
            ..cfg.train.clone()
        };
        info!("training {} for {} epochs", kind.name(), tc.epochs);
        let out = match train(model, &dir.data, &tc) {
            Ok(out) => out,
            Err(TrainError::NonFiniteLoss { epoch, batch, last_good }) => {
                let path = cfg.out.join(format!("{}.last_good.json", kind.name()));
                last_good.save(&path, None)?;
                return Err(CliError::new(
                    crate::error::Category::Numeric,
                    format!(
                        "{}: non-finite loss at epoch {epoch}, batch {batch}; last good parameters in {}",
                        kind.name(),
                        path.display()
                    ),
                ));
            }
            Err(e) => return Err(e.into()),
        };
        let path = model_file(&cfg.out, kind);
        out.model.save(&path, Some(&out.optimizer))?;
        m.output(&path)?;
        if let Some(last) = out.log.last() {
            info!("{}: train nll {:.4}, dev nll {:.4}", kind.name(), last.train_nll, last.dev_nll);
        }
        curves.push(LlCurve {
            model: kind.name().to_string(),
            dataset: dataset.clone(),
            epochs: out.log,
        });
    }
    for path in emit_tables(&[], &curves, &cfg.out)? {
        if path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("ll_curve_")) {
            m.output(&path)?;
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: PathBuf,
    /// Directory holding trained models.
    pub run: PathBuf,
    /// Output directory; the run directory when absent.
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
    pub models: Vec<ModelKind>,
    pub split: Split,
    /// Also score a homogeneous Poisson process fitted to the train split.
    pub baselines: bool,
    pub eval: EvalConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            data: "data".into(),
            run: "run".into(),
            out: None,
            dataset: None,
            models: ModelKind::ALL.to_vec(),
            split: Split::Dev,
            baselines: false,
            eval: EvalConfig::default(),
        }
    }
}

fn load_models(run: &Path, kinds: &[ModelKind], m: &mut Manifest) -> Result<Vec<NeuralModel>> {
    kinds
        .iter()
        .map(|&k| {
            let path = model_file(run, k);
            require(&path, "model")?;
            m.input(&path)?;
            Ok(NeuralModel::load(&path)?.0)
        })
        .collect()
}

pub fn report_file(dataset: &str) -> String {
    format!("report_{dataset}.json")
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<Manifest> {
    let dir = load_data_dir(&cfg.data)?;
    let dataset = dataset_name(&cfg.dataset, &cfg.data);
    let out = cfg.out.clone().unwrap_or_else(|| cfg.run.clone());
    let mut m = Manifest::new("evaluate", cfg)?;
    for f in &dir.files {
        m.input(f)?;
    }
    m.seed("eval", cfg.eval.seed);
    let neural = load_models(&cfg.run, &cfg.models, &mut m)?;
    let mut models: Vec<Box<dyn IntensityModel>> = Vec::new();
    if cfg.baselines {
        models.push(Box::new(PoissonParams::fit(&dir.data.train, dir.catalog.k_total())?));
    }
    models.extend(neural.into_iter().map(|n| Box::new(n) as Box<dyn IntensityModel>));
    let split = cfg.split.pick(&dir.data);
    let mut reports: Vec<MetricReport> = Vec::new();
    for model in &models {
        info!("evaluating {}", model.name());
        reports.push(build_report(model.as_ref(), &dataset, split, &cfg.eval)?);
    }
    create_dir(&out)?;
    let path = out.join(report_file(&dataset));
    let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    m.output(&path)?;
    for p in emit_tables(&reports, &[], &out)? {
        m.output(&p)?;
    }
    Ok(m)
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub data: PathBuf,
    pub run: PathBuf,
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
    pub models: Vec<ModelKind>,
    pub split: Split,
    /// Forecast lengths in events; all are scored on the same rollouts.
    pub horizons: Vec<usize>,
    /// Wall-clock horizons in hours; when given they replace `horizons`.
    pub hours: Vec<f64>,
    /// Rollout settings; `long` is raised to the largest horizon.
    pub otd: OtdConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            data: "data".into(),
            run: "run".into(),
            out: None,
            dataset: None,
            models: ModelKind::ALL.to_vec(),
            split: Split::Dev,
            horizons: vec![3, 6],
            hours: Vec::new(),
            otd: OtdConfig::default(),
        }
    }
}

pub fn forecast(cfg: &ForecastConfig) -> Result<Manifest> {
    if cfg.horizons.is_empty() || cfg.horizons.contains(&0) || cfg.hours.iter().any(|&h| !(h > 0.0)) {
        return Err(CliError::config("horizons must be positive"));
    }
    let dir = load_data_dir(&cfg.data)?;
    let dataset = dataset_name(&cfg.dataset, &cfg.data);
    let out = cfg.out.clone().unwrap_or_else(|| cfg.run.clone());
    let mut m = Manifest::new("forecast", cfg)?;
    for f in &dir.files {
        m.input(f)?;
    }
    m.seed("rollout", cfg.otd.seed);
    let models = load_models(&cfg.run, &cfg.models, &mut m)?;
    let otd_cfg = OtdConfig {
        long: cfg.horizons.iter().copied().max().unwrap_or(1),
        ..cfg.otd.clone()
    };
    let split = cfg.split.pick(&dir.data);
    let mut text = String::from("model");
    if cfg.hours.is_empty() {
        for h in &cfg.horizons {
            text += &format!(",otd_h{h}");
        }
    } else {
        for h in &cfg.hours {
            text += &format!(",otd_{h}h");
        }
    }
    text += ",prefixes\n";
    for model in &models {
        info!("forecasting with {}", model.name());
        let (means, prefixes) = if cfg.hours.is_empty() {
            otd_by_horizon(model, split, &cfg.horizons, &otd_cfg)?
        } else {
            otd_by_hours(model, split, &cfg.hours, &otd_cfg)?
        };
        text += model.name();
        for v in means {
            text += &format!(",{v:.6}");
        }
        text += &format!(",{prefixes}\n");
    }
    create_dir(&out)?;
    let path = out.join(format!("forecast_{dataset}.csv"));
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    m.output(&path)?;
    Ok(m)
}

// ------------------------------------------------------------------ report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Directories holding `report_*.json` and `ll_curve_*.csv` files.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            inputs: vec!["run".into()],
            out: "report".into(),
        }
    }
}

pub fn report(cfg: &ReportConfig) -> Result<Manifest> {
    let mut m = Manifest::new("report", cfg)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    let mut curves = Vec::new();
    for dir in &cfg.inputs {
        require(dir, "input directory")?;
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.starts_with("report_") && name.ends_with(".json") {
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                let mut r: Vec<MetricReport> =
                    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                reports.append(&mut r);
                m.input(&path)?;
            } else if name.starts_with("ll_curve_") && name.ends_with(".csv") {
                curves.push((name, path.clone()));
                m.input(&path)?;
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::data("no evaluation reports found in the inputs"));
    }
    create_dir(&cfg.out)?;
    for p in emit_tables(&reports, &[], &cfg.out)? {
        m.output(&p)?;
    }
    for (name, src) in curves {
        let dst = cfg.out.join(name);
        std::fs::copy(&src, &dst).map_err(|e| CliError::io(&src, e))?;
        m.output(&dst)?;
    }
    Ok(m)
}
