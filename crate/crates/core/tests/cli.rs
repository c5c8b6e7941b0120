use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

const STANDARD: &str = "\
# cubic test problem
dim = 1
n = 63
nonlinearity = cubic
c0 = 1
c3 = 1
y_d = 20*sin(2*pi*x)
alpha = 0.01
beta = 3.125
gamma = 200
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l0-control"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out.status.code().unwrap(), stderr)
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.cfg", STANDARD);
    let out = dir.path().join("out");
    let (code, err) = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    for f in ["solution.csv", "trace.csv", "solve_report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&out.join("solve_report.json"));
    assert_eq!(r["command"], "solve");
    assert_eq!(r["tool"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["problem"]["alpha"], "0.01");
}

#[test]
fn ill_posed_parameters_exit_2() {
    let dir = TempDir::new().unwrap();
    let text = STANDARD
        .replace("alpha = 0.01", "alpha = 0")
        .replace("gamma = 200", "gamma = inf");
    let cfg = write_config(dir.path(), "bad.cfg", &text);
    let out = dir.path().join("out");
    let (code, _) = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    let cfg = write_config(dir.path(), "typo.cfg", &format!("{STANDARD}\nbetta = 1\n"));
    let (code, err) = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("betta"));

    let (code, _) = run(&["solve", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn verify_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.cfg",
        &format!("{STANDARD}growth_trials = 100\n"),
    );
    let mut reports = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let (code, err) = run(&[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "3",
        ]);
        assert_eq!(code, 0, "{err}");
        reports.push(std::fs::read(out.join("verify_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["first_order_certificate"]["passes"], true);
    assert!(r["second_order"]["necessary"]["verdict"].is_string());
}

#[test]
fn verify_rejects_corrupted_solution() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.cfg",
        &format!("{STANDARD}growth_trials = 20\n"),
    );
    let out = dir.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(run(&["solve", "--config", c, "--out", o]).0, 0);
    let text = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let row = &mut lines[10];
    let cut = row.rfind(',').unwrap();
    row.replace_range(cut + 1.., "7.5");
    let sol = write_config(dir.path(), "corrupt.csv", &(lines.join("\n") + "\n"));
    let (code, _) = run(&[
        "verify",
        "--config",
        c,
        "--out",
        o,
        "--solution",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let r = report(&out.join("verify_report.json"));
    assert_eq!(r["first_order_certificate"]["passes"], false);
    assert!(r["first_order"]["pmp_max_residual"].as_f64().unwrap() > 1e-8);

    let garbage = write_config(dir.path(), "garbage.csv", "i,x,u\n0,0.1,not-a-number\n");
    let (code, _) = run(&[
        "verify",
        "--config",
        c,
        "--out",
        o,
        "--solution",
        garbage.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn verify_reads_back_a_solved_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.cfg",
        &format!("{STANDARD}growth_trials = 50\n"),
    );
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();
    let o = out.to_str().unwrap();
    assert_eq!(run(&["solve", "--config", c, "--out", o]).0, 0);
    let sol = out.join("solution.csv");
    let (code, err) = run(&[
        "verify",
        "--config",
        c,
        "--out",
        o,
        "--solution",
        sol.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn l1_regime_is_reported_as_delegated() {
    let dir = TempDir::new().unwrap();
    let text = STANDARD.replace("gamma = 200", "gamma = 20");
    let cfg = write_config(dir.path(), "l1.cfg", &format!("{text}growth_trials = 20\n"));
    let out = dir.path().join("out");
    let (code, err) = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let r = report(&out.join("verify_report.json"));
    assert_eq!(
        r["second_order"]["sufficient"][0]["verdict"],
        "delegated-regime"
    );
    assert_eq!(
        r["second_order"]["structural"]["verdict"],
        "delegated-regime"
    );
}

#[test]
fn sweep_rows_and_empty_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.cfg", STANDARD);
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();
    let o = out.to_str().unwrap();
    let (code, err) = run(&["sweep", "--config", c, "--out", o, "--beta", "0.5,1,2,4,30"]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(
        report(&out.join("sweep_report.json"))["rows"]
            .as_array()
            .unwrap()
            .len(),
        5
    );

    let (code, _) = run(&["sweep", "--config", c, "--out", o, "--beta", ""]);
    assert_eq!(code, 2);
    let (code, _) = run(&["sweep", "--config", c, "--out", o, "--beta", "2,1"]);
    assert_eq!(code, 2);
}

#[test]
fn oracle_table_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .args(["oracle", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("-0.0857864376269"));
    assert!(!stdout.contains("FAIL"));
    let r = report(&out.join("oracle_report.json"));
    assert!(r["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|row| row["pass"] == true));
}
