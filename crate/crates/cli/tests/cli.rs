//! End-to-end runs of the `amberflag` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amberflag::io::read_sequences;
use amberflag::HawkesParams;

fn amberflag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amberflag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = amberflag(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_params(dir: &Path, p: &HawkesParams) -> PathBuf {
    let path = dir.join("params.toml");
    p.save(&path).unwrap();
    path
}

fn small_hawkes() -> HawkesParams {
    HawkesParams::new(vec![0.4, 0.3, 0.2], vec![0.2, 0.1, 0.0, 0.1, 0.2, 0.1, 0.0, 0.1, 0.3], 1.0).unwrap()
}

#[test]
fn simulate_with_zero_sequences_writes_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), &small_hawkes());
    let out = dir.path().join("sim");
    ok(&["simulate", "--params", s(&params), "--n", "0", "--out", s(&out)]);
    assert_eq!(std::fs::read(out.join("sequences.jsonl")).unwrap(), b"");
    assert!(out.join("simulate.manifest.toml").exists());
}

#[test]
fn simulate_is_deterministic_in_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), &small_hawkes());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["simulate", "--params", s(&params), "--n", "40", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("sequences.jsonl")).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));
}

#[test]
fn simulated_lengths_match_expected_counts() {
    let dir = tempfile::tempdir().unwrap();
    let k = 35;
    let alpha: Vec<f64> = (0..k * k)
        .map(|i| if i / k == i % k { 0.3 } else if (i / k + 1) % k == i % k { 0.2 } else { 0.0 })
        .collect();
    let p = HawkesParams::new(vec![0.1; k], alpha, 1.0).unwrap();
    let params = write_params(dir.path(), &p);
    let out = dir.path().join("sim");
    ok(&["simulate", "--params", s(&params), "--n", "500", "--t-end", "12", "--out", s(&out)]);
    let seqs = read_sequences(&out.join("sequences.jsonl")).unwrap();
    assert_eq!(seqs.len(), 500);
    let lens: Vec<f64> = seqs.iter().map(|s| s.len() as f64).collect();
    let n = lens.len() as f64;
    let mean = lens.iter().sum::<f64>() / n;
    let sd = (lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected: f64 = p.expected_counts(12.0).iter().sum();
    assert!((mean - expected).abs() < 3.0 * sd / n.sqrt(), "mean {mean} expected {expected}");
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // configuration: no parameter file
    assert_eq!(amberflag(&["simulate", "--out", s(&dir.path().join("x"))]).status.code(), Some(2));
    // configuration: unknown key in a config file
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(amberflag(&["simulate", "--config", s(&cfg)]).status.code(), Some(2));
    // data: times out of order
    let seqs = dir.path().join("seqs");
    std::fs::create_dir(&seqs).unwrap();
    std::fs::write(
        seqs.join("sequences.jsonl"),
        "{\"seq_id\":\"a\",\"label\":0,\"t_obs\":5.0,\"events\":[[2.0,1],[1.0,1]]}\n",
    )
    .unwrap();
    std::fs::write(seqs.join("catalog.json"), "{\"names\":[\"type_1\"],\"adverse_id\":null}\n").unwrap();
    let data_out = dir.path().join("data");
    let out = amberflag(&["ingest", "--sequences", s(&seqs.join("sequences.jsonl")), "--out", s(&data_out)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // io: the output directory is a regular file
    let params = write_params(dir.path(), &small_hawkes());
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(
        amberflag(&["simulate", "--params", s(&params), "--n", "3", "--out", s(&blocker)]).status.code(),
        Some(5)
    );
}

fn read_text(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn pipeline_produces_tables_and_reruns_from_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let params = write_params(root, &small_hawkes());
    let sim = root.join("sim");
    let data = root.join("toy");
    let run = root.join("run");
    ok(&["simulate", "--params", s(&params), "--n", "60", "--seed", "3", "--out", s(&sim)]);
    ok(&["ingest", "--sequences", s(&sim.join("sequences.jsonl")), "--seed", "1", "--out", s(&data)]);
    let train_cfg = root.join("train.toml");
    std::fs::write(
        &train_cfg,
        "[model]\nembed_dim = 4\nhidden_dim = 8\nheads = 2\nmixtures = 2\n\n[train]\nepochs = 2\nbatch_size = 16\nmc_samples_per_interval = 5\ndev_mc_samples = 10\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&train_cfg), "--data", s(&data), "--out", s(&run), "--seed", "2"]);
    for kind in ["nhp", "rmtpp", "thp", "if"] {
        assert!(run.join(format!("{kind}.model.json")).exists());
        let curve = read_text(&run.join(format!("ll_curve_{kind}_toy.csv")));
        assert_eq!(curve.lines().count(), 3);
        assert!(curve.starts_with("epoch,train_loglik,dev_loglik\n"));
    }

    let eval_args = |out: &Path| {
        vec![
            "evaluate".to_string(),
            "--data".into(),
            s(&data).into(),
            "--run".into(),
            s(&run).into(),
            "--out".into(),
            s(out).into(),
            "--baselines".into(),
            "--prefixes".into(),
            "8".into(),
            "--rollouts".into(),
            "2".into(),
        ]
    };
    let e1 = root.join("eval1");
    let args: Vec<String> = eval_args(&e1);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let table = read_text(&e1.join("accuracy_table.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "model,dataset,dev_nll,next_type_accuracy,intensity_accuracy,next_time_rmse"
    );
    let models: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["poisson", "nhp", "rmtpp", "thp", "if"]);
    let otd = read_text(&e1.join("otd_toy.csv"));
    assert!(otd.starts_with("model,otd_short,otd_long\n"));
    assert_eq!(otd.lines().count(), 6);

    // rerun from the manifest into a fresh directory
    let e2 = root.join("eval2");
    ok(&[
        "evaluate",
        "--config",
        s(&e1.join("evaluate.manifest.toml")),
        "--out",
        s(&e2),
    ]);
    for f in ["accuracy_table.csv", "otd_toy.csv", "report_toy.json"] {
        assert_eq!(read_text(&e1.join(f)), read_text(&e2.join(f)), "{f}");
    }

    let fc = root.join("fc");
    ok(&[
        "forecast", "--data", s(&data), "--run", s(&run), "--out", s(&fc), "--horizon", "2", "--horizon", "4",
        "--prefixes", "5", "--rollouts", "2",
    ]);
    let forecast = read_text(&fc.join("forecast_toy.csv"));
    assert!(forecast.starts_with("model,otd_h2,otd_h4,prefixes\n"), "{forecast}");
    assert_eq!(forecast.lines().count(), 5);

    let rep = root.join("report");
    ok(&["report", "--input", s(&e1), "--input", s(&run), "--out", s(&rep)]);
    assert_eq!(read_text(&rep.join("accuracy_table.csv")), table);
    assert!(rep.join("ll_curve_thp_toy.csv").exists());
}

#[test]
fn clinical_pipeline_from_readings() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let raw = root.join("raw");
    let data = root.join("clinical");
    ok(&["synth-readings", "--patients", "80", "--seed", "4", "--out", s(&raw)]);
    ok(&[
        "ingest",
        "--readings",
        s(&raw.join("readings.csv")),
        "--onsets",
        s(&raw.join("onsets.csv")),
        "--rules",
        s(&raw.join("rules.csv")),
        "--out",
        s(&data),
    ]);
    let train = read_sequences(&data.join("train.jsonl")).unwrap();
    let positives = train.iter().filter(|s| s.label == 1).count();
    assert!(positives > 0 && positives < train.len());
    let catalog = read_text(&data.join("catalog.json"));
    assert!(catalog.contains("adverse_event"));
}
