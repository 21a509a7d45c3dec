use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use e2m_core::e2m::{fit, quantile_spread_init};
use e2m_core::io::{align_soft_labels, read_dataset, read_soft_labels, write_fit_result};
use e2m_core::{E2mConfig, SoftLabeledDataset};

fn e2m(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2m"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn status_counts(dataset_csv: &str) -> (usize, usize) {
    let rows: Vec<&str> = dataset_csv.lines().skip(1).collect();
    let observed = rows.iter().filter(|r| r.split(',').nth(2) == Some("observed")).count();
    (observed, rows.len() - observed)
}

#[test]
fn generate_is_deterministic_and_follows_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = e2m(&["generate", "--seed", "11", "--n", "500", "--censor-frac", "0.4", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in [
        "dataset.csv",
        "corruption.csv",
        "soft_labels_uncertain.csv",
        "soft_labels_noisy.csv",
        "soft_labels_unknown.csv",
    ] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
    assert_eq!(status_counts(&read(&a.join("dataset.csv"))), (300, 200));

    let manifest: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["fit"]["tol"], 1e-8);
    assert_eq!(manifest["details"]["effective_sd"], 0.2);
}

#[test]
fn generate_without_censoring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[scheme]\nn = 10\nJ = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = e2m(&["generate", "--config", path(&cfg), "--out", path(&out), "--method", "noisy"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(status_counts(&read(&out.join("dataset.csv"))), (10, 0));
    assert!(out.join("soft_labels_noisy.csv").exists());
    assert!(!out.join("soft_labels_uncertain.csv").exists());
}

#[test]
fn fit_with_vacuous_labels_matches_library_em() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let o = e2m(&["generate", "--seed", "4", "--n", "200", "--out", path(&data_dir)]);
    assert!(o.status.success());
    let dataset = data_dir.join("dataset.csv");
    let labels = data_dir.join("soft_labels_unknown.csv");
    let out = dir.path().join("fit");
    let o = e2m(&[
        "fit", "--dataset", path(&dataset), "--labels", path(&labels), "--method", "unknown",
        "--out", path(&out),
    ]);
    assert!(
        matches!(o.status.code(), Some(0) | Some(3)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let data = read_dataset(fs::File::open(&dataset).unwrap()).unwrap();
    let soft = read_soft_labels(fs::File::open(&labels).unwrap()).unwrap();
    let soft = align_soft_labels(&data, soft).unwrap();
    let ds = SoftLabeledDataset::new(data, soft).unwrap();
    let init = quantile_spread_init(ds.data(), 3).unwrap();
    let (params, trace) = fit(&ds, &init, &E2mConfig::default()).unwrap();
    let mut expected = Vec::new();
    write_fit_result("unknown", 0, &params, &trace, &mut expected).unwrap();
    assert_eq!(read(&out.join("fit_result.csv")), String::from_utf8(expected).unwrap());

    let trace_csv = read(&out.join("trace.csv"));
    assert_eq!(trace_csv.lines().count(), 1 + trace.iterates.len());
}

#[test]
fn fit_exit_codes_partition_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    assert!(e2m(&["generate", "--seed", "2", "--n", "120", "--out", path(&data_dir)]).status.success());
    let dataset = data_dir.join("dataset.csv");
    let labels = data_dir.join("soft_labels_uncertain.csv");

    let out = dir.path().join("one");
    let o = e2m(&[
        "fit", "--dataset", path(&dataset), "--labels", path(&labels), "--max-iters", "1",
        "--out", path(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let row = read(&out.join("fit_result.csv"));
    assert!(row.lines().nth(1).unwrap().contains(",1,false,"), "{row}");

    // Every label certain on component 1: the other components get no weight.
    let starved = dir.path().join("starved.csv");
    let mut text = String::from("item_id,pl_1,pl_2,pl_3\n");
    for id in 0..120 {
        text.push_str(&format!("{id},1,0,0\n"));
    }
    fs::write(&starved, text).unwrap();
    let o = e2m(&["fit", "--dataset", path(&dataset), "--labels", path(&starved), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let o = e2m(&["fit", "--dataset", "missing.csv", "--labels", path(&labels), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data.dataset"));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "item_id,y_star\n1,abc\n").unwrap();
    let o = e2m(&["fit", "--dataset", path(&broken), "--labels", path(&labels), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.csv"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "sed = 1\n[fit]\ntoll = 1e-3\n").unwrap();
    let o = e2m(&["generate", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sed") && err.contains("fit.toll"), "{err}");

    fs::write(&cfg, "[scheme]\nn = 10\nJ = 2\nR = [1, 1]\n").unwrap();
    let o = e2m(&["generate", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scheme"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = e2m(&["generate", "--n", "20", "--out", path(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn single_replication_sweep_summarizes_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, "[sweep]\ngrid = [0.2]\nreps = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = e2m(&[
        "sweep", "--config", path(&cfg), "--n", "150", "--method", "uncertain", "--out",
        path(&out), "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let results = read(&out.join("results.csv"));
    let row: Vec<&str> = results.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "ok");
    let truth = [4.0, 0.5, 0.8];
    let summary = read(&out.join("summary.csv"));
    for (k, t) in truth.iter().enumerate() {
        let est: f64 = row[8 + k].parse().unwrap();
        let line = summary
            .lines()
            .find(|l| l.contains(&format!(",xi_{},", k + 1)))
            .unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        let mean: f64 = cells[4].parse().unwrap();
        assert!((mean - ((est - t) / t).abs()).abs() < 1e-15);
        assert_eq!(cells[5], "0");
        assert!(out.join(format!("figure_xi_{}.csv", k + 1)).exists());
        let svg = read(&out.join(format!("figure_xi_{}.svg", k + 1)));
        assert!(svg.starts_with("<svg"));
    }
}

#[test]
fn sweep_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let out = dir.path().join(format!("w{workers}"));
        let o = e2m(&[
            "sweep", "--n", "100", "--reps", "3", "--seed", "5", "--workers", workers, "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (read(&out.join("results.csv")), read(&out.join("summary.csv")))
    };
    assert_eq!(run("1"), run("4"));
}
