//! Cohort construction invariants over random readings.

use std::collections::BTreeMap;

use amberflag::ingest::{
    assemble_dataset, build_sequences, catalog_for, downsample_negatives, flag_events, read_onsets, read_readings,
    read_rules, reference_rules, synthesize_readings, write_onsets, write_readings, write_rules, BiomarkerReading,
    CohortConfig, IngestError, SyntheticCohort, ThresholdRule,
};
use amberflag::{EventSequence, SplitRatios};
use proptest::prelude::*;

fn rules() -> Vec<ThresholdRule> {
    let rule = |marker: &str, low, high, k, name: &str| ThresholdRule {
        biomarker: marker.into(),
        low,
        high,
        flag_type: k,
        flag_name: name.into(),
    };
    vec![
        rule("temp", 36.0, 38.0, 1, "fever_or_chill"),
        rule("hr", 50.0, 110.0, 2, "heart_rate"),
        rule("lactate", 0.0, 2.0, 3, "lactate"),
    ]
}

fn readings() -> impl Strategy<Value = Vec<BiomarkerReading>> {
    let marker = prop::sample::select(vec!["temp", "hr", "lactate", "unrelated"]);
    prop::collection::vec((0usize..4, 0.0f64..48.0, marker, 0.0f64..150.0), 1..120).prop_map(|rows| {
        rows.into_iter()
            .map(|(p, t, m, v)| {
                // scale values into each marker's plausible range
                let value = match m {
                    "temp" => 34.0 + v / 30.0,
                    "lactate" => v / 40.0,
                    _ => v,
                };
                BiomarkerReading {
                    patient_id: format!("p{p}"),
                    t_hours: (t * 4.0).round() / 4.0,
                    biomarker: m.to_string(),
                    value,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flags_are_abnormal_deduplicated_and_strictly_ordered(rs in readings(), dedup in 0.0f64..4.0) {
        let rules = rules();
        let flags = flag_events(&rs, &rules, dedup).unwrap();
        for (patient, pf) in &flags {
            prop_assert!(pf.flags.windows(2).all(|w| w[0].t < w[1].t), "{patient}");
            let mine: Vec<&BiomarkerReading> = rs.iter().filter(|r| &r.patient_id == patient).collect();
            prop_assert_eq!(pf.last_seen, mine.iter().map(|r| r.t_hours).fold(f64::MIN, f64::max));
            for e in &pf.flags {
                let rule = &rules[e.k - 1];
                // ties were nudged forward by at most a few microhours
                let source = mine.iter().any(|r| {
                    r.biomarker == rule.biomarker && rule.is_abnormal(r.value) && (e.t - r.t_hours).abs() < 1e-4
                });
                prop_assert!(source, "flag {e:?} has no abnormal reading");
            }
            for k in 1..=3 {
                let same: Vec<f64> = pf.flags.iter().filter(|e| e.k == k).map(|e| e.t).collect();
                prop_assert!(same.windows(2).all(|w| w[1] - w[0] >= dedup - 1e-4));
            }
        }
    }

    #[test]
    fn windows_respect_the_cohort_rules(rs in readings(), onset_at in prop::collection::vec(prop::option::of(1.0f64..48.0), 4)) {
        let rules = rules();
        let catalog = catalog_for(&rules, "adverse_event").unwrap();
        let cfg = CohortConfig { window_hours: 12.0, dedup_hours: 1.0, ..CohortConfig::default() };
        let flags = flag_events(&rs, &rules, cfg.dedup_hours).unwrap();
        let onsets: BTreeMap<String, f64> = onset_at
            .iter()
            .enumerate()
            .filter_map(|(p, o)| o.map(|t| (format!("p{p}"), t)))
            .collect();
        let (pos, neg) = build_sequences(&flags, &onsets, &cfg, &catalog).unwrap();
        let adverse = catalog.adverse_id().unwrap();
        for s in pos.iter().chain(&neg) {
            prop_assert!(s.len() >= 2);
            prop_assert!(s.t_obs <= cfg.window_hours + 1e-9);
            prop_assert!(s.events.iter().all(|e| e.t >= 0.0 && e.t <= s.t_obs));
            s.validate(&catalog).unwrap();
        }
        for s in &pos {
            prop_assert_eq!(s.label, 1);
            prop_assert!(onsets.contains_key(&s.seq_id));
            let last = s.events.last().unwrap();
            prop_assert_eq!(last.k, adverse);
            prop_assert_eq!(last.t, s.t_obs);
            prop_assert!(s.events[..s.len() - 1].iter().all(|e| e.k != adverse));
        }
        for s in &neg {
            prop_assert_eq!(s.label, 0);
            prop_assert!(!onsets.contains_key(&s.seq_id));
            prop_assert!(s.events.iter().all(|e| e.k != adverse));
        }
    }

    #[test]
    fn stratified_split_partitions_each_class(n_pos in 2usize..40, n_neg in 2usize..80, seed in any::<u64>()) {
        let catalog = catalog_for(&rules(), "adverse_event").unwrap();
        let make = |prefix: &str, n: usize, label: u8| -> Vec<EventSequence> {
            (0..n)
                .map(|i| {
                    let mut events = vec![amberflag::Event::new(0.5, 1), amberflag::Event::new(1.0, 2)];
                    if label == 1 {
                        events.push(amberflag::Event::new(2.0, catalog.adverse_id().unwrap()));
                    }
                    EventSequence::new(format!("{prefix}{i}"), label, events, 2.0)
                })
                .collect()
        };
        let neg = downsample_negatives(n_pos, make("n", n_neg, 0), seed);
        prop_assert_eq!(neg.len(), n_pos.min(n_neg));
        let ratios = SplitRatios::default();
        let d = assemble_dataset(make("p", n_pos, 1), neg.clone(), ratios, seed, &catalog).unwrap();
        prop_assert_eq!(d.all().count(), n_pos + neg.len());
        let count = |v: &[EventSequence], label: u8| v.iter().filter(|s| s.label == label).count();
        let (p_train, p_test, p_dev) = ratios.sizes(n_pos);
        prop_assert_eq!((count(&d.train, 1), count(&d.test, 1), count(&d.dev, 1)), (p_train, p_test, p_dev));
        let (n_train, n_test, n_dev) = ratios.sizes(neg.len());
        prop_assert_eq!((count(&d.train, 0), count(&d.test, 0), count(&d.dev, 0)), (n_train, n_test, n_dev));
    }
}

#[test]
fn one_class_cohorts_are_rejected() {
    let catalog = catalog_for(&rules(), "adverse_event").unwrap();
    let s = EventSequence::new("a", 0, vec![amberflag::Event::new(1.0, 1), amberflag::Event::new(2.0, 2)], 3.0);
    assert!(matches!(
        assemble_dataset(vec![], vec![s], SplitRatios::default(), 0, &catalog),
        Err(IngestError::EmptyCohort)
    ));
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticCohort {
        patients: 12,
        seed: 5,
        ..SyntheticCohort::default()
    };
    let rules = reference_rules();
    let (rs, onsets) = synthesize_readings(&cfg, &rules);
    let (rp, lp, op) = (dir.path().join("r.csv"), dir.path().join("l.csv"), dir.path().join("o.csv"));
    write_readings(&rs, &rp).unwrap();
    write_rules(&rules, &lp).unwrap();
    write_onsets(&onsets, &op).unwrap();
    assert_eq!(read_readings(&rp).unwrap(), rs);
    assert_eq!(read_rules(&lp).unwrap(), rules);
    assert_eq!(read_onsets(&op).unwrap(), onsets);
}

#[test]
fn synthetic_cohort_is_deterministic_and_yields_both_classes() {
    let cfg = SyntheticCohort {
        patients: 60,
        seed: 9,
        ..SyntheticCohort::default()
    };
    let rules = reference_rules();
    let a = synthesize_readings(&cfg, &rules);
    assert_eq!(a, synthesize_readings(&cfg, &rules));
    let catalog = catalog_for(&rules, "adverse_event").unwrap();
    assert_eq!(catalog.k_total(), 35);
    let flags = flag_events(&a.0, &rules, 1.0).unwrap();
    let (pos, neg) = build_sequences(&flags, &a.1, &CohortConfig::default(), &catalog).unwrap();
    assert!(!pos.is_empty() && !neg.is_empty());
}

#[test]
fn malformed_rules_are_reported() {
    let mut bad = rules();
    bad[0].low = 40.0;
    assert!(matches!(flag_events(&[], &bad, 1.0), Err(IngestError::BadRule { .. })));
}
