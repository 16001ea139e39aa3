//! Raw biomarker readings to amber-flag sequences: threshold flagging,
//! onset windows, negative downsampling and split assembly.
//!
//! Times in produced sequences are measured from the window start, so
//! every sequence lives on `[0, window_hours]`.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{split_dataset, Event, EventError, EventSequence, EventTypeCatalog, SplitDataset, SplitRatios};
use crate::seeds;

/// Two flags of a patient at the same instant are separated by this many
/// hours so times stay strictly increasing.
pub const TIE_SHIFT_HOURS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cohort needs at least one positive and one negative sequence")]
    EmptyCohort,
    #[error("invalid rule for {biomarker}: {message}")]
    BadRule { biomarker: String, message: String },
    #[error("{path}, record {record}: {message}")]
    Parse { path: String, record: usize, message: String },
    #[error("invalid cohort configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerReading {
    pub patient_id: String,
    pub t_hours: f64,
    pub biomarker: String,
    pub value: f64,
}

/// Readings outside the closed normal range `[low, high]` raise a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub biomarker: String,
    pub low: f64,
    pub high: f64,
    pub flag_type: usize,
    pub flag_name: String,
}

impl ThresholdRule {
    pub fn is_abnormal(&self, value: f64) -> bool {
        value < self.low || value > self.high
    }

    fn check(&self) -> Result<()> {
        let bad = |message: &str| IngestError::BadRule {
            biomarker: self.biomarker.clone(),
            message: message.to_string(),
        };
        if !(self.low < self.high) {
            return Err(bad("low must be below high"));
        }
        if self.flag_type == crate::event::PAD_ID {
            return Err(bad("flag type 0 is reserved for padding"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub adverse_name: String,
    pub window_hours: f64,
    pub dedup_hours: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            adverse_name: "adverse_event".into(),
            window_hours: 12.0,
            dedup_hours: 1.0,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_hours > 0.0) || !(self.dedup_hours >= 0.0) {
            return Err(IngestError::BadConfig(format!(
                "window_hours must be positive and dedup_hours non-negative, got {} and {}",
                self.window_hours, self.dedup_hours
            )));
        }
        Ok(())
    }
}

/// Flags of one patient plus the time of their last reading, which anchors
/// the observation window of negatives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatientFlags {
    pub flags: Vec<Event>,
    pub last_seen: f64,
}

/// The catalog implied by a rule set: flag names by type id, then the
/// adverse type.
pub fn catalog_for(rules: &[ThresholdRule], adverse_name: &str) -> Result<EventTypeCatalog> {
    let mut names: BTreeMap<usize, &str> = BTreeMap::new();
    for r in rules {
        r.check()?;
        if let Some(prev) = names.insert(r.flag_type, &r.flag_name) {
            if prev != r.flag_name {
                return Err(IngestError::BadRule {
                    biomarker: r.biomarker.clone(),
                    message: format!("flag type {} named both {prev} and {}", r.flag_type, r.flag_name),
                });
            }
        }
    }
    let n = names.len();
    if names.keys().copied().ne(1..=n) {
        return Err(IngestError::BadConfig(format!("flag types must be exactly 1..={n}")));
    }
    Ok(EventTypeCatalog::clinical(
        names.into_values().map(String::from).collect(),
        adverse_name,
    )?)
}

/// Threshold-flags every reading; readings of biomarkers without a rule are
/// ignored. A flag within `dedup_hours` of the previous emitted flag of the
/// same type is dropped.
pub fn flag_events(readings: &[BiomarkerReading], rules: &[ThresholdRule], dedup_hours: f64) -> Result<BTreeMap<String, PatientFlags>> {
    let mut by_marker: BTreeMap<&str, Vec<&ThresholdRule>> = BTreeMap::new();
    for r in rules {
        r.check()?;
        by_marker.entry(&r.biomarker).or_default().push(r);
    }
    let mut per_patient: BTreeMap<String, Vec<&BiomarkerReading>> = BTreeMap::new();
    for r in readings {
        per_patient.entry(r.patient_id.clone()).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (patient, mut rs) in per_patient {
        rs.sort_by(|a, b| a.t_hours.total_cmp(&b.t_hours));
        let last_seen = rs.last().map_or(0.0, |r| r.t_hours);
        let mut last_emitted: BTreeMap<usize, f64> = BTreeMap::new();
        let mut flags = Vec::new();
        for r in rs {
            for rule in by_marker.get(r.biomarker.as_str()).into_iter().flatten() {
                if !rule.is_abnormal(r.value) {
                    continue;
                }
                if let Some(&prev) = last_emitted.get(&rule.flag_type) {
                    if r.t_hours - prev < dedup_hours {
                        continue;
                    }
                }
                last_emitted.insert(rule.flag_type, r.t_hours);
                flags.push(Event::new(r.t_hours, rule.flag_type));
            }
        }
        flags.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.k.cmp(&b.k)));
        for i in 1..flags.len() {
            if flags[i].t <= flags[i - 1].t {
                flags[i].t = flags[i - 1].t + TIE_SHIFT_HOURS;
            }
        }
        out.insert(patient, PatientFlags { flags, last_seen });
    }
    Ok(out)
}

/// Cuts each patient's flags to their observation window. Positives keep
/// `[onset - window, onset)` and end with the adverse event at the onset;
/// negatives keep the last `window_hours` of their stay. Windows that would
/// start before admission start at admission. Sequences with fewer than two
/// events are dropped. Returns `(positives, negatives)`.
pub fn build_sequences(
    flags: &BTreeMap<String, PatientFlags>,
    onsets: &BTreeMap<String, f64>,
    cfg: &CohortConfig,
    catalog: &EventTypeCatalog,
) -> Result<(Vec<EventSequence>, Vec<EventSequence>)> {
    cfg.validate()?;
    let adverse = catalog
        .adverse_id()
        .ok_or_else(|| IngestError::BadConfig("catalog has no adverse event type".into()))?;
    let empty = PatientFlags::default();
    let mut patients: Vec<&String> = flags.keys().chain(onsets.keys()).collect();
    patients.sort();
    patients.dedup();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for patient in patients {
        let pf = flags.get(patient).unwrap_or(&empty);
        let (start, end, onset) = match onsets.get(patient) {
            Some(&onset) => ((onset - cfg.window_hours).max(0.0), onset, true),
            None => ((pf.last_seen - cfg.window_hours).max(0.0), pf.last_seen, false),
        };
        let mut events: Vec<Event> = pf
            .flags
            .iter()
            .filter(|e| e.t >= start && (e.t < end || (!onset && e.t <= end)))
            .map(|e| Event::new(e.t - start, e.k))
            .collect();
        if onset {
            events.push(Event::new(end - start, adverse));
        }
        if events.len() < 2 {
            continue;
        }
        let seq = EventSequence::new(patient.clone(), u8::from(onset), events, end - start);
        seq.validate(catalog)?;
        if onset {
            pos.push(seq);
        } else {
            neg.push(seq);
        }
    }
    Ok((pos, neg))
}

/// Uniform subsample of `negatives` down to `target`, without replacement
/// and in input order. Keeps everything, with a warning, when there are too
/// few.
pub fn downsample_negatives(target: usize, negatives: Vec<EventSequence>, seed: u64) -> Vec<EventSequence> {
    if negatives.len() <= target {
        if negatives.len() < target {
            warn!(
                "only {} negatives for {target} positives; keeping all of them",
                negatives.len()
            );
        }
        return negatives;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = sample(&mut rng, negatives.len(), target).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    negatives
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| (keep.next_if_eq(&i).is_some()).then_some(s))
        .collect()
}

/// Splits positives and negatives separately with the same ratios and
/// merges each split, positives first. Every sequence is validated.
pub fn assemble_dataset(
    positives: Vec<EventSequence>,
    negatives: Vec<EventSequence>,
    ratios: SplitRatios,
    seed: u64,
    catalog: &EventTypeCatalog,
) -> Result<SplitDataset> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(IngestError::EmptyCohort);
    }
    for s in positives.iter().chain(&negatives) {
        s.validate(catalog)?;
    }
    let mut p = split_dataset(positives, ratios, seeds::derive(seed, "split-positive", 0))?;
    let n = split_dataset(negatives, ratios, seeds::derive(seed, "split-negative", 0))?;
    p.train.extend(n.train);
    p.test.extend(n.test);
    p.dev.extend(n.dev);
    crate::event::check_unique_ids(p.all())?;
    p.split_seed = seed;
    Ok(p)
}

fn parse_err(path: &Path, record: usize, message: impl ToString) -> IngestError {
    IngestError::Parse {
        path: path.display().to_string(),
        record,
        message: message.to_string(),
    }
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e))
}

/// Reads `patient_id,t_hours,biomarker,value` with a header line.
pub fn read_readings(path: &Path) -> Result<Vec<BiomarkerReading>> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(path, true)?.deserialize().enumerate() {
        let r: BiomarkerReading = rec.map_err(|e| parse_err(path, i + 1, e))?;
        if !(r.t_hours >= 0.0) || !r.value.is_finite() {
            return Err(parse_err(path, i + 1, "time must be non-negative and value finite"));
        }
        out.push(r);
    }
    Ok(out)
}

/// Reads one `biomarker,low,high,flag_type,flag_name` rule per line. A
/// leading header line is optional.
pub fn read_rules(path: &Path) -> Result<Vec<ThresholdRule>> {
    let mut rdr = csv_reader(path, false)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, i + 1, e))?;
        if i == 0 && rec.get(0) == Some("biomarker") {
            continue;
        }
        let rule: ThresholdRule = rec.deserialize(None).map_err(|e| parse_err(path, i + 1, e))?;
        rule.check()?;
        out.push(rule);
    }
    Ok(out)
}

#[derive(Deserialize, Serialize)]
struct OnsetRow {
    patient_id: String,
    onset_t_hours: f64,
}

/// Reads `patient_id,onset_t_hours` with a header line. Patients absent from
/// the file are negatives.
pub fn read_onsets(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, rec) in csv_reader(path, true)?.deserialize().enumerate() {
        let r: OnsetRow = rec.map_err(|e| parse_err(path, i + 1, e))?;
        if !(r.onset_t_hours >= 0.0) {
            return Err(parse_err(path, i + 1, "onset time must be non-negative"));
        }
        out.insert(r.patient_id, r.onset_t_hours);
    }
    Ok(out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| parse_err(path, 0, e))
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_readings(readings: &[BiomarkerReading], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in readings {
        w.serialize(r).map_err(|e| parse_err(path, 0, e))?;
    }
    finish(path, w)
}

pub fn write_rules(rules: &[ThresholdRule], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rules {
        w.serialize(r).map_err(|e| parse_err(path, 0, e))?;
    }
    finish(path, w)
}

pub fn write_onsets(onsets: &BTreeMap<String, f64>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (p, &t) in onsets {
        w.serialize(OnsetRow {
            patient_id: p.clone(),
            onset_t_hours: t,
        })
        .map_err(|e| parse_err(path, 0, e))?;
    }
    finish(path, w)
}

/// Biomarker, normal range and flag name of the bundled reference rules.
const REFERENCE: [(&str, f64, f64, &str); 34] = [
    ("temperature", 36.0, 38.0, "thermoregulation_dysfunction"),
    ("heart_rate", 50.0, 100.0, "abnormal_heart_rate"),
    ("resp_rate", 10.0, 22.0, "abnormal_respiratory_rate"),
    ("sbp", 90.0, 160.0, "abnormal_systolic_pressure"),
    ("dbp", 50.0, 100.0, "abnormal_diastolic_pressure"),
    ("map", 65.0, 110.0, "abnormal_mean_arterial_pressure"),
    ("spo2", 92.0, 100.0, "hypoxemia"),
    ("gcs", 14.0, 15.0, "altered_mentation"),
    ("wbc", 4.0, 12.0, "abnormal_white_cell_count"),
    ("lactate", 0.5, 2.0, "hyperlactatemia"),
    ("creatinine", 0.6, 1.3, "renal_dysfunction"),
    ("bun", 7.0, 25.0, "abnormal_urea_nitrogen"),
    ("platelets", 150.0, 400.0, "abnormal_platelets"),
    ("bilirubin", 0.1, 1.2, "hyperbilirubinemia"),
    ("glucose", 70.0, 180.0, "dysglycemia"),
    ("sodium", 135.0, 145.0, "dysnatremia"),
    ("potassium", 3.5, 5.0, "dyskalemia"),
    ("chloride", 98.0, 107.0, "dyschloremia"),
    ("bicarbonate", 22.0, 29.0, "abnormal_bicarbonate"),
    ("ph", 7.35, 7.45, "acid_base_disturbance"),
    ("pao2", 75.0, 100.0, "abnormal_arterial_oxygen"),
    ("paco2", 35.0, 45.0, "abnormal_arterial_co2"),
    ("fio2", 0.21, 0.5, "high_oxygen_requirement"),
    ("hemoglobin", 12.0, 17.5, "abnormal_hemoglobin"),
    ("hematocrit", 36.0, 50.0, "abnormal_hematocrit"),
    ("inr", 0.8, 1.2, "coagulopathy"),
    ("ptt", 25.0, 35.0, "prolonged_ptt"),
    ("albumin", 3.5, 5.0, "hypoalbuminemia"),
    ("calcium", 8.5, 10.5, "dyscalcemia"),
    ("magnesium", 1.7, 2.2, "dysmagnesemia"),
    ("phosphate", 2.5, 4.5, "dysphosphatemia"),
    ("troponin", 0.0, 0.04, "myocardial_injury"),
    ("urine_output", 0.5, 3.0, "abnormal_urine_output"),
    ("crp", 0.0, 10.0, "systemic_inflammation"),
];

/// 34 threshold rules on common vital signs and labs, flag types `1..=34`.
pub fn reference_rules() -> Vec<ThresholdRule> {
    REFERENCE
        .iter()
        .enumerate()
        .map(|(i, &(b, low, high, name))| ThresholdRule {
            biomarker: b.into(),
            low,
            high,
            flag_type: i + 1,
            flag_name: name.into(),
        })
        .collect()
}

/// Generator of raw readings for an invented ICU cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCohort {
    pub patients: usize,
    pub positive_fraction: f64,
    /// Stay length is uniform on `[min_stay_hours, max_stay_hours]`.
    pub min_stay_hours: f64,
    pub max_stay_hours: f64,
    /// Readings per biomarker per hour.
    pub reading_rate: f64,
    /// Chance that a reading is abnormal away from any onset.
    pub base_abnormal: f64,
    /// Extra abnormal chance at the onset for the biomarkers tied to the
    /// adverse event, ramping up linearly over the preceding window.
    pub onset_abnormal: f64,
    /// How many of the rules are tied to the adverse event.
    pub onset_markers: usize,
    pub window_hours: f64,
    pub seed: u64,
}

impl Default for SyntheticCohort {
    fn default() -> Self {
        Self {
            patients: 200,
            positive_fraction: 0.3,
            min_stay_hours: 24.0,
            max_stay_hours: 72.0,
            reading_rate: 0.25,
            base_abnormal: 0.03,
            onset_abnormal: 0.5,
            onset_markers: 8,
            window_hours: 12.0,
            seed: 0,
        }
    }
}

/// Readings plus onsets drawn from `cfg` against `rules`. Patient ids are
/// `p000000`, `p000001`, ...; each patient draws from their own stream.
pub fn synthesize_readings(cfg: &SyntheticCohort, rules: &[ThresholdRule]) -> (Vec<BiomarkerReading>, BTreeMap<String, f64>) {
    let mut readings = Vec::new();
    let mut onsets = BTreeMap::new();
    for p in 0..cfg.patients {
        let id = format!("p{p:06}");
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "patient", p as u64));
        let stay = rng.random_range(cfg.min_stay_hours..=cfg.max_stay_hours);
        let onset = (rng.random::<f64>() < cfg.positive_fraction)
            .then(|| rng.random_range((stay * 0.5).min(cfg.window_hours)..=stay));
        let end = onset.unwrap_or(stay);
        let mut rows = Vec::new();
        for (ri, rule) in rules.iter().enumerate() {
            let mut t = 0.0;
            loop {
                t += -(1.0 - rng.random::<f64>()).ln() / cfg.reading_rate;
                if t > end {
                    break;
                }
                let ramp = match onset {
                    Some(o) if ri < cfg.onset_markers && o - t < cfg.window_hours => {
                        cfg.onset_abnormal * (1.0 - (o - t) / cfg.window_hours)
                    }
                    _ => 0.0,
                };
                let width = rule.high - rule.low;
                let value = if rng.random::<f64>() < cfg.base_abnormal + ramp {
                    if rng.random::<bool>() {
                        rule.high + width * rng.random_range(0.05..0.5)
                    } else {
                        rule.low - width * rng.random_range(0.05..0.5)
                    }
                } else {
                    rule.low + width * rng.random_range(0.05..0.95)
                };
                rows.push(BiomarkerReading {
                    patient_id: id.clone(),
                    t_hours: t,
                    biomarker: rule.biomarker.clone(),
                    value,
                });
            }
        }
        rows.sort_by(|a, b| a.t_hours.total_cmp(&b.t_hours));
        readings.extend(rows);
        if let Some(o) = onset {
            onsets.insert(id, o);
        }
    }
    (readings, onsets)
}
