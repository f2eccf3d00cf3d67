use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn leakgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakgate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes an AR(1) pair into `dir` and returns the two paths.
fn ar1_pair(dir: &TempDir, phi: &str, mu: &str, n: &str, seed: &str) -> (PathBuf, PathBuf) {
    let x = dir.path().join(format!("x_{seed}.txt"));
    let y = dir.path().join(format!("y_{seed}.txt"));
    let out = leakgate(&[
        "gen-ar1",
        path_str(&x),
        path_str(&y),
        "--phi",
        phi,
        "--mu",
        mu,
        "--n",
        n,
        "--seed",
        seed,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (x, y)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn identical_files_pass() {
    let dir = TempDir::new().unwrap();
    let (x, _) = ar1_pair(&dir, "0", "0", "2000", "1");
    let out = leakgate(&["analyze", path_str(&x), path_str(&x), "--delta", "1"]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["decision"], "NoViolation");
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 0);
    assert_eq!(report["config"]["B"], 1000);
    assert_eq!(report["config"]["alpha"], 0.1);
}

#[test]
fn large_shift_is_a_violation() {
    let dir = TempDir::new().unwrap();
    let (x, _) = ar1_pair(&dir, "0", "0", "10000", "2");
    let shifted: String = fs::read_to_string(&x)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{}\n", l.parse::<f64>().unwrap() + 10.0))
        .collect();
    let y = dir.path().join("shifted.txt");
    fs::write(&y, shifted).unwrap();
    let out = leakgate(&[
        "analyze",
        path_str(&x),
        path_str(&y),
        "--delta",
        "1",
        "--format",
        "text",
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Violation"));
}

#[test]
fn data_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.txt");
    let (x, y) = ar1_pair(&dir, "0", "0", "200", "3");
    let out = leakgate(&["analyze", path_str(&missing), path_str(&y), "--delta", "1"]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1.0\nfast\n").unwrap();
    assert_eq!(
        code(&leakgate(&["analyze", path_str(&bad), path_str(&y), "--delta", "1"])),
        2
    );

    let out = leakgate(&["analyze", path_str(&x), path_str(&y), "--delta", "1", "--alpha", "1.5"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&leakgate(&["analyze", path_str(&x)])), 1);
    assert_eq!(code(&leakgate(&["--help"])), 0);
}

#[test]
fn report_file_is_written() {
    let dir = TempDir::new().unwrap();
    let (x, y) = ar1_pair(&dir, "0.3", "0", "500", "4");
    let report = dir.path().join("report.json");
    let out = leakgate(&[
        "analyze",
        path_str(&x),
        path_str(&y),
        "--delta",
        "2",
        "--seed",
        "9",
        "--output",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["inputs"]["unit"], "ns");
}

#[test]
fn power_floors_and_reports_variant() {
    let dir = TempDir::new().unwrap();
    let (x, y) = ar1_pair(&dir, "0", "0", "1000", "5");
    let run = |extra: &[&str]| {
        let mut args = vec!["power", path_str(&x), path_str(&y), "--mu", "1.5", "--delta", "1"];
        args.extend_from_slice(extra);
        leakgate(&args)
    };
    let out = run(&[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let median = json(&out);
    assert_eq!(median["n"], 100);
    assert_eq!(median["variant"], "MedianOverKsub");
    assert_eq!(median["request"]["power"], 0.9);

    let shift = json(&run(&["--shift"]));
    assert_eq!(shift["variant"], "MinOverKsub");
    assert!(shift["sigma_hat"].as_f64().unwrap() <= median["sigma_hat"].as_f64().unwrap());

    let out = leakgate(&["power", path_str(&x), path_str(&y), "--mu", "1", "--delta", "1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("must exceed delta"));
}

#[test]
fn simulate_grid_is_deterministic() {
    let args = [
        "simulate",
        "--phis",
        "-0.5,0,0.5",
        "--mus",
        "0,0.5,1",
        "--reps",
        "50",
        "--n",
        "1000",
        "-B",
        "200",
        "--seed",
        "3",
    ];
    let a = leakgate(&args);
    let b = leakgate(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let table = String::from_utf8(a.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let rate: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }

    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let v = json(&leakgate(&json_args));
    assert_eq!(v["cells"].as_array().unwrap().len(), 9);
    assert_eq!(v["grid"]["seed"], 3);
}

#[test]
fn simulate_null_cell() {
    let out = leakgate(&[
        "simulate", "--phis", "0", "--mus", "0", "--delta", "0.5", "--n", "2000", "--reps", "100", "--format", "json",
    ]);
    assert_eq!(code(&out), 0);
    let rate = json(&out)["cells"][0]["reject_rate"].as_f64().unwrap();
    assert!(rate <= 0.05, "{rate}");
}

#[test]
fn gen_ar1_files_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let (x1, y1) = ar1_pair(&dir, "0.5", "0.3", "1000", "7");
    let other = TempDir::new().unwrap();
    let (x2, y2) = ar1_pair(&other, "0.5", "0.3", "1000", "7");
    assert_eq!(fs::read(&x1).unwrap(), fs::read(&x2).unwrap());
    assert_eq!(fs::read(&y1).unwrap(), fs::read(&y2).unwrap());
    let values = |p: &Path| {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count()
    };
    assert_eq!(values(&x1), 1000);
    assert_eq!(values(&y1), 1000);

    let x = dir.path().join("a.txt");
    let y = dir.path().join("b.txt");
    let out = leakgate(&["gen-ar1", path_str(&x), path_str(&y), "--phi", "1.0", "--n", "100"]);
    assert_eq!(code(&out), 1);

    let unwritable = dir.path().join("no/such/dir/x.txt");
    let out = leakgate(&[
        "gen-ar1",
        path_str(&unwritable),
        path_str(&y),
        "--phi",
        "0.2",
        "--n",
        "100",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = TempDir::new().unwrap();
    let (x, y) = ar1_pair(&dir, "0.5", "0.2", "800", "8");
    let run = |threads: &str| {
        let out = leakgate(&[
            "analyze",
            path_str(&x),
            path_str(&y),
            "--delta",
            "0.1",
            "--threads",
            threads,
            "--format",
            "csv",
        ]);
        (code(&out), out.stdout)
    };
    assert_eq!(run("1"), run("3"));
}
