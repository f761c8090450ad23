use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netference"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// name -> (estimate, se, ci_low, ci_high)
fn effects(p: impl AsRef<Path>) -> Vec<(String, f64, Option<f64>, Option<f64>, Option<f64>)> {
    let mut rdr = csv::Reader::from_path(p).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let opt = |i: usize| r[i].parse::<f64>().ok();
            (r[0].to_string(), r[1].parse().unwrap(), opt(2), opt(3), opt(4))
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(dir.path(), &["simulate", "--scenario", "4", "--n", "500", "--seed", "9", "--out", out]);
    }
    for f in ["edges.txt", "ranked.txt", "covariates.csv", "units.csv", "truth.json"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path().join("a/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["seed"], "9");
}

#[test]
fn scenario3_rejects_proportion_exposure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--scenario", "3", "--exposure", "top_k:5", "--n", "300", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "scenario = 2\nbogus = 1\n").unwrap();
    let o = run(dir.path(), &["simulate", "--config", "run.conf", "--n", "300", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn estimate_total_effect_adds_up_and_bootstrap_fills_intervals() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["estimate", "--scenario", "2", "--n", "800", "--bootstrap", "30", "--bootstrap-seed", "4", "--out", "e"],
    );
    let rows = effects(dir.path().join("e/effects.csv"));
    let get = |n: &str| rows.iter().find(|r| r.0 == n).unwrap_or_else(|| panic!("missing {n}"));
    let (tau, d0, te) = (get("tau").1, get("Delta0").1, get("TE").1);
    assert!((te - (tau + d0)).abs() < 1e-9);
    for r in &rows {
        if r.0.starts_with("delta_g") && r.0.ends_with("[0]") {
            continue;
        }
        let (se, lo, hi) = (r.2.unwrap(), r.3.unwrap(), r.4.unwrap());
        assert!(se > 0.0 && lo < r.1 && r.1 < hi, "{}", r.0);
    }
    for f in ["report.json", "surface.csv", "bootstrap.json", "balance.csv", "manifest.json"] {
        assert!(dir.path().join("e").join(f).exists(), "{f}");
    }
}

#[test]
fn estimate_from_units_file_matches_simulated_draw() {
    let dir = tempfile::tempdir().unwrap();
    let pop = ["--scenario", "1", "--n", "600", "--seed", "3"];
    ok(dir.path(), &[&["simulate"][..], &pop, &["--out", "s"]].concat());
    ok(dir.path(), &[&["estimate"][..], &pop, &["--out", "e1"]].concat());
    ok(dir.path(), &["estimate", "--units", "s/units.csv", "--out", "e2"]);
    let a = effects(dir.path().join("e1/effects.csv"));
    let b = effects(dir.path().join("e2/effects.csv"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        assert!((x.1 - y.1).abs() < 1e-9, "{}", x.0);
    }
}

#[test]
fn naive_estimator_reports_only_tau() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["estimate", "--scenario", "1", "--n", "600", "--estimator", "diff_means", "--out", "e"]);
    let rows = effects(dir.path().join("e/effects.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, "tau");
}

#[test]
fn bias_table_has_nine_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["bias", "--scenario", "2", "--n", "600", "--out", "b"]);
    let mut rdr = csv::Reader::from_path(dir.path().join("b/bias.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    for set in ["none", "x_ind", "x_z"] {
        assert_eq!(rows.iter().filter(|r| &r[2] == set).count(), 3);
    }
}

#[test]
fn balance_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["balance", "--scenario", "2", "--n", "1000", "--out", "b"]);
    for f in ["balance_z.csv", "balance_g.csv", "joint_balance.csv", "summary.json"] {
        assert!(dir.path().join("b").join(f).exists(), "{f}");
    }
}

#[test]
fn single_replicate_rmse_is_abs_bias_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["replicate", "--scenarios", "1", "--levels", "low", "--reps", "1", "--n", "400", "--seed", "5"];
    ok(dir.path(), &[&args[..], &["--out", "r1"]].concat());
    ok(dir.path(), &[&args[..], &["--out", "r2"]].concat());
    for f in ["replicate_long.csv", "table_tau.csv", "table_delta0.csv", "table_delta1.csv"] {
        assert_eq!(read(dir.path().join("r1").join(f)), read(dir.path().join("r2").join(f)), "{f}");
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("r1/replicate_long.csv")).unwrap();
    let h = rdr.headers().unwrap().clone();
    let col = |n: &str| h.iter().position(|c| c == n).unwrap();
    let (bias, rmse, q) = (col("bias"), col("rmse"), col("quantity"));
    let mut seen = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        if &r[q] == "non_converged" {
            continue;
        }
        let (b, m): (f64, f64) = (r[bias].parse().unwrap(), r[rmse].parse().unwrap());
        assert!((m - b.abs()).abs() < 1e-9);
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn edge_list_input_reproduces_simulated_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let pop = ["--scenario", "2", "--n", "600", "--seed", "8"];
    ok(dir.path(), &[&["simulate"][..], &pop, &["--out", "s"]].concat());
    ok(dir.path(), &[&["estimate"][..], &pop, &["--out", "e1"]].concat());
    ok(
        dir.path(),
        &[
            "estimate", "--edges", "s/edges.txt", "--covariates", "s/covariates.csv", "--ranked", "s/ranked.txt",
            "--neighbor-means", "race,grade", "--out", "e2",
        ],
    );
    let a = effects(dir.path().join("e1/effects.csv"));
    let b = effects(dir.path().join("e2/effects.csv"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.1 - y.1).abs() < 1e-9, "{}", x.0);
    }
}

#[test]
fn manifest_replays_a_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["estimate", "--scenario", "3", "--n", "600", "--seed", "2", "--out", "a"]);
    ok(dir.path(), &["estimate", "--config", "a/manifest.json", "--out", "b"]);
    assert_eq!(read(dir.path().join("a/effects.csv")), read(dir.path().join("b/effects.csv")));
}
