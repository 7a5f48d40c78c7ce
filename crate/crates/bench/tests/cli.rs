use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const ABS_B64: &str = r#"
[run]
budget = 64
eta_eps = 0.0625
x0 = [1.0]

[problem]
family = "l1"
dimension = 1
"#;

const NOISY_L1: &str = r#"
[run]
budget = 1000
r_eps = 1.0
mode = "stochastic"
delta = 0.1
repetitions = 8
seed = 3

[problem]
family = "l1"
dimension = 3
center = { kind = "random", scale = 1.0 }
noise = { model = "clipped-sphere", sigma = 0.5 }
"#;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfsgd-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &Path, command: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "-c",
        config.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    bench(&args)
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn abs_b64_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "abs.toml", ABS_B64);
    let out = tmp.path().join("out");
    let res = run_in(&out, "tune", &cfg, &["--no-timing"]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# pfsgd-bench runs schema v1"));
    assert_eq!(
        lines.next(),
        Some("run_id,seed,k_final,T,eta_o_exponent,total_queries,gap,dist_to_opt,case,wall_ms,budget")
    );
    assert_eq!(
        lines.next(),
        Some("0,0,2,16,2,64,0.15625,0.15625,Normal,0,64")
    );
    let diag = std::fs::read_to_string(out.join("diagnostics.jsonl")).unwrap();
    let run: serde_json::Value = serde_json::from_str(diag.lines().nth(1).unwrap()).unwrap();
    assert!(run["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["verdict"] == "pass"));
}

#[test]
fn both_step_sources_is_rejected_without_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "bad.toml",
        &ABS_B64.replace("eta_eps = 0.0625", "eta_eps = 0.0625\nr_eps = 1.0"),
    );
    let out = tmp.path().join("out");
    let res = run_in(&out, "tune", &cfg, &[]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("eta_eps"));
    assert!(!out.exists());
}

#[test]
fn parse_errors_name_line_and_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "typo.toml",
        &ABS_B64.replace("budget = 64", "budgett = 64"),
    );
    let out = tmp.path().join("out");
    let res = run_in(&out, "tune", &cfg, &[]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 3") && err.contains("budgett"), "{err}");
    assert!(!out.exists());
}

#[test]
fn zero_repetitions_and_short_sweeps_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "abs.toml", ABS_B64);
    let out = tmp.path().join("out");
    assert!(!run_in(&out, "tune", &cfg, &["--repetitions", "0"])
        .status
        .success());
    let res = run_in(
        &out,
        "sweep",
        &cfg,
        &["--budgets", "64,128,256", "--repetitions", "20"],
    );
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn outputs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "noisy.toml", NOISY_L1);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let res = run_in(dir, "tune", &cfg, &["--no-timing", "--evaluations"]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    for f in ["runs.csv", "diagnostics.jsonl", "summary.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = std::fs::read_to_string(a.join("runs.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        assert_eq!(row[1], (3 + i).to_string());
        let queries: u64 = row[5].parse().unwrap();
        assert!(queries <= 1000);
    }
}

#[test]
fn noiseless_good_event_frequency_is_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "ge.toml",
        "[run]\nbudget = 256\neta_eps = 0.01\n\n[problem]\nfamily = \"huber\"\nwidth = 0.5\ndimension = 3\n\n[good_event]\npaths = 50\n",
    );
    let out = tmp.path().join("out");
    let res = run_in(&out, "validate-good-event", &cfg, &[]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["frequency"], 1.0);
    assert_eq!(summary["held_all"], 50);
}

#[test]
fn restart_respects_total_budget() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "sc.toml",
        "[run]\nrounds = 9\nepsilon = 8.0\nrepetitions = 4\n\n[problem]\nfamily = \"strongly-convex\"\ndimension = 2\nmu = 1.0\nlipschitz = 1.0\nnoise = { model = \"slack-sphere\", fraction = 0.5 }\n",
    );
    let out = tmp.path().join("out");
    let res = run_in(&out, "restart", &cfg, &["--no-timing"]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    for row in data_rows(&csv) {
        let queries: u64 = row[5].parse().unwrap();
        assert!(queries <= 1 << 10);
        assert_eq!(row[10], "1022");
    }
}

#[test]
fn sweep_reports_a_slope() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "abs.toml", ABS_B64);
    let out = tmp.path().join("out");
    let res = run_in(
        &out,
        "sweep",
        &cfg,
        &[
            "--budgets",
            "64,128,256,512",
            "--repetitions",
            "20",
            "--no-timing",
        ],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let points = summary["sweep"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 4);
    assert_eq!(points[0]["runs"], 20);
    let rows = data_rows(&std::fs::read_to_string(out.join("runs.csv")).unwrap());
    assert_eq!(rows.len(), 80);
    assert_eq!(rows[79][0], "79");
}

#[test]
fn boundary_test_runs_without_problem() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let res = bench(&[
        "boundary-test",
        "--horizon",
        "500",
        "--paths",
        "200",
        "--delta",
        "0.1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["report"]["paths"], 200);
}
