//! End-to-end checks of the CLI surface: output schemas, exit codes, and
//! byte-determinism of repeated runs.

use std::process::{Command, Output};

fn reebgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reebgap"))
        .args(args)
        .env_remove("REEBGAP_PRECISION")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn spectrum_csv_rows() {
    let out = reebgap(&["spectrum", "-a", "2,3", "-k", "6", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("k,value_lower,value_upper,axis,iterate"));
    assert!(text.contains("4,6,6,1,3"));
    assert!(text.contains("5,6,6,2,2"));
}

#[test]
fn spectrum_single_axis() {
    let out = reebgap(&["spectrum", "-a", "1", "-k", "3", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("1,1,1,1,1"));
    assert!(text.contains("3,3,3,1,3"));
}

#[test]
fn spectrum_irrational_separates() {
    let out = reebgap(&["spectrum", "-a", "1,sqrt(2)", "-k", "5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["entries"].as_array().unwrap().len(), 5);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn spectrum_parse_error_exit_1() {
    let out = reebgap(&["spectrum", "-a", "0.5", "-k", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gap_witness_rational_diff_zero() {
    let out = reebgap(&["gap-witness", "-a", "2,3"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["sigma_rank"], 5);
    assert_eq!(v["result"]["target_rank"], 4);
    assert_eq!(v["result"]["action_difference"]["expr"], "0");
}

#[test]
fn gap_witness_irrational_and_precondition() {
    let out = reebgap(&["gap-witness", "-a", "1,sqrt(2)", "-e", "1/100"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["approximant"]["certificate"]["checked"], true);

    let out = reebgap(&["gap-witness", "-a", "1,sqrt(2)", "-e", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn close_rational_trivial_and_irrational() {
    let out = reebgap(&["close", "-a", "2,3", "--bound", "10"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["t_star"], 0.0);

    let out = reebgap(&[
        "close",
        "-a",
        "1,sqrt(2)",
        "--profile",
        "linear:0.2",
        "--bound",
        "10",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["found"], true);
    assert!(v["result"]["residual"].as_f64().unwrap() < 1e-6);

    // Bound 0: NotFound is a value, reported with exit 0.
    let out = reebgap(&["close", "-a", "1,sqrt(2)", "--bound", "0"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["found"], false);
}

#[test]
fn index_subcommands() {
    let out = reebgap(&["index", "rs", "--rotations", "pi:1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["rs_num"], 2);
    assert_eq!(v["result"]["rs_den"], 2);

    let out = reebgap(&["index", "cz", "--rotations", "0.5pi:1,3pi:1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["cz"], 4);
}

#[test]
fn lcm_values() {
    let out = reebgap(&["lcm", "-v", "2,3,4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["lcm"]["num"], "12");

    let out = reebgap(&["lcm", "-v", "1,sqrt(2)"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["finite"], false);

    // Undecidable rationality resolves to exit 2.
    let out = reebgap(&["lcm", "-v", "pi,e"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn approx_schema() {
    let out = reebgap(&["approx", "-a", "1,sqrt(2)", "-e", "1/10"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let r = &v["result"];
    assert!(r["r"].as_array().unwrap().len() == 2);
    assert!(r["T"]["num"].is_string());
    assert_eq!(r["direction"], "inner_outer");
    assert_eq!(r["certificate"]["checked"], true);

    let out = reebgap(&["approx", "-a", "1,sqrt(2)", "-e", "1/10", "--upper"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["direction"], "outer_only");
}

#[test]
fn simulate_emits_trajectory() {
    let out = reebgap(&[
        "simulate",
        "-a",
        "2,3",
        "--t-end",
        "6",
        "--tol",
        "1e-9",
        "--mu",
        "0.4,0.6",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("t,re_z1,im_z1,re_z2,im_z2,constraint_drift"));
    assert!(text.lines().count() > 10);
}

#[test]
fn axioms_check_passes_and_embeds_config() {
    let out = reebgap(&[
        "axioms-check",
        "-a",
        "2,3",
        "--samples",
        "6",
        "--seed",
        "42",
        "--jobs",
        "2",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["config"]["seed"], 42);
    assert_eq!(v["config"]["jobs"], 2);
}

#[test]
fn ham_example_reports_calibration() {
    let out = reebgap(&["ham-example", "--pairs", "3", "--seed", "7"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let scale = v["result"]["calibration"]["scale"].as_f64().unwrap();
    assert!((scale - 0.25).abs() < 1e-5);
    for entry in v["result"]["period_demo"].as_array().unwrap() {
        let predicted = entry["predicted_period"].as_f64().unwrap();
        let detected = entry["detected_period"].as_f64().unwrap();
        assert!((predicted - detected).abs() < 1e-8 * predicted.max(1.0));
    }
}

#[test]
fn byte_identical_reruns() {
    let args = ["spectrum", "-a", "1,sqrt(2)", "-k", "8"];
    let a = stdout(&reebgap(&args));
    let b = stdout(&reebgap(&args));
    assert_eq!(a, b);
    let args = [
        "axioms-check",
        "-a",
        "2,3",
        "--samples",
        "4",
        "--seed",
        "9",
    ];
    let a = stdout(&reebgap(&args));
    let b = stdout(&reebgap(&args));
    assert_eq!(a, b);
}

#[test]
fn unresolvable_order_exits_2() {
    // A deep Pell convergent of sqrt(2): the 64-bit budget cannot separate
    // it from sqrt(2), and the two are not provably equal.
    let (mut p, mut q) = (1i128, 1i128);
    let (mut pp, mut qp) = (1i128, 0i128);
    for _ in 0..34 {
        let (np, nq) = (2 * p + pp, 2 * q + qp);
        pp = p;
        qp = q;
        p = np;
        q = nq;
    }
    let convergent = format!("{p}/{q}");
    let out = reebgap(&[
        "--precision",
        "64",
        "spectrum",
        "-a",
        &format!("sqrt(2),{convergent}"),
        "-k",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // A generous budget separates the same pair.
    let out = reebgap(&[
        "--precision",
        "512",
        "spectrum",
        "-a",
        &format!("sqrt(2),{convergent}"),
        "-k",
        "2",
    ]);
    assert!(out.status.success());
}

#[test]
fn index_csv_import() {
    let dir = std::env::temp_dir().join("reebgap_cli_csv");
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("rotation.csv");
    let mut csv = String::from("t,m11,m12,m21,m22\n");
    let n = 400;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let s = std::f64::consts::PI * t;
        csv.push_str(&format!(
            "{t},{},{},{},{}\n",
            s.cos(),
            -s.sin(),
            s.sin(),
            s.cos()
        ));
    }
    std::fs::write(&file, csv).unwrap();
    let out = reebgap(&["index", "rs", "--csv", file.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["rs_num"], 2);
}

#[test]
fn precision_env_and_config_file() {
    let dir = std::env::temp_dir().join("reebgap_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "precision=128\nformat=json\n").unwrap();
    let out = reebgap(&["--config", cfg.to_str().unwrap(), "spectrum", "-a", "2,3", "-k", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["config"]["precision_bits"], 128);

    let out = Command::new(env!("CARGO_BIN_EXE_reebgap"))
        .args(["spectrum", "-a", "2,3", "-k", "2"])
        .env("REEBGAP_PRECISION", "512")
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(v["config"]["precision_bits"], 512);
}
