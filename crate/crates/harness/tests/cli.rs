//! End-to-end tests of the harness binary: exit codes, file layout,
//! reproducibility, and agreement between raw run files and the aggregate
//! report.

use std::path::Path;
use std::process::{Command, Output};

use seqcopy_harness::experiment::AggregateReport;

const BIN: &str = env!("CARGO_BIN_EXE_seqcopy-harness");

fn tiny_config(strategies: &str) -> String {
    format!(
        r#"
        seed = 11
        repetitions = 2
        [dataset]
        kind = "toy"
        name = "moons"
        n = 60
        noise = 0.05
        [run]
        strategies = {strategies}
        iterations = 2
        samples_per_iter = 12
        epochs_per_iter = 5
        epoch_allowance = 3
        hidden = [6]
        "#
    )
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Sorted (relative path, bytes) snapshot of a directory tree.
fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn run_produces_the_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["pure-sequential", "online"]"#));
    let out_dir = dir.path().join("results");
    let out = run_cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_success(&out);
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("results.csv").exists());
    // 2 strategies x 1 delta x 2 reps, a CSV and a JSON each.
    let runs = std::fs::read_dir(out_dir.join("runs")).unwrap().count();
    assert_eq!(runs, 8);

    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("dataset,strategy,delta,lambda0,seed,accuracy,conv,eff,final_size"));
    assert_eq!(results.lines().count(), 5, "4 successful runs plus header");
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &tiny_config(r#"["sequential", "pure-sequential", "single-pass", "online"]"#),
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run_cli(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            "3",
        ]);
        assert_success(&out);
    }
    let a = snapshot(&out_a);
    let b = snapshot(&out_b);
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between identical runs");
    }
}

#[test]
fn seed_override_changes_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["pure-sequential"]"#));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_success(&run_cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap(),
    ]));
    assert_success(&run_cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap(),
        "--seed", "999",
    ]));
    let a = std::fs::read_to_string(out_a.join("results.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("results.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn aggregate_means_match_raw_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["pure-sequential"]"#));
    let out_dir = dir.path().join("results");
    assert_success(&run_cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(),
    ]));

    let report: AggregateReport = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("report.json")).unwrap(),
    )
    .unwrap();
    let cell = &report.cells[0];

    // Recompute the mean accuracy curve from the per-run CSVs.
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for rep in 0..report.repetitions {
        let path = out_dir
            .join("runs")
            .join(format!("pure-sequential_delta1e-6_rep{rep:03}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        let curve: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        curves.push(curve);
    }
    for t in 0..cell.accuracy.mean.len() {
        let mean = curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64;
        assert!(
            (mean - cell.accuracy.mean[t]).abs() <= 1e-12,
            "iteration {t}: recomputed {mean} vs report {}",
            cell.accuracy.mean[t]
        );
    }
}

#[test]
fn report_renders_table_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["pure-sequential", "online"]"#));
    let out_dir = dir.path().join("results");
    assert_success(&run_cli(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(),
    ]));

    let out = run_cli(&["report", "--in", out_dir.to_str().unwrap(), "--format", "table"]);
    assert_success(&out);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("pure-sequential"));
    assert!(table.contains("online"));

    let out = run_cli(&["report", "--in", out_dir.to_str().unwrap(), "--format", "csv"]);
    assert_success(&out);
    let plot = out_dir.join("plot_pure-sequential_delta1e-6.csv");
    assert!(plot.exists());
    // T + 1 = 3 data rows plus the header.
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 4);
}

#[test]
fn report_on_missing_directory_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("never-ran");
    let out = run_cli(&["report", "--in", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr was: {stderr}");
    assert!(stderr.contains("never-ran"), "stderr was: {stderr}");
}

#[test]
fn sweep_overrides_the_delta_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["sequential"]"#));
    let out_dir = dir.path().join("results");
    let out = run_cli(&[
        "sweep",
        "--config", cfg.to_str().unwrap(),
        "--param", "delta",
        "--values", "0.001,0.1",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(out_dir.join("runs").join("sequential_delta1e-3_rep000.csv").exists());
    assert!(out_dir.join("runs").join("sequential_delta1e-1_rep001.csv").exists());

    let out = run_cli(&[
        "sweep",
        "--config", cfg.to_str().unwrap(),
        "--param", "epochs",
        "--values", "1,2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn env_var_provides_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(r#"["online"]"#));
    let out_dir = dir.path().join("from-env");
    let out = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("SEQCOPY_OUT", &out_dir)
        .output()
        .unwrap();
    assert_success(&out);
    assert!(out_dir.join("report.json").exists());
}

#[test]
fn unknown_config_keys_fail_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "batchsize = 3\n[dataset]\nkind = \"toy\"\nname = \"moons\"\n",
    );
    let out = run_cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));
}
