use std::path::Path;
use std::process::{Command, Output};

fn lgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgt")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generated_star_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("star.json");
    let report = dir.path().join("out.csv");
    assert!(lgt(&["gen", "star", "--width", "3", "--depth", "5", "-o", path(&inst)]).status.success());
    let out = lgt(&["run", "--policy", "entropic", "--instance", path(&inst), "--report", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("run_id,policy,instance,t,"));
}

#[test]
fn verify_prints_passing_checks() {
    let out = lgt(&["verify", "--suite", "all", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().filter(|l| l.contains("PASS")).count() >= 8);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn single_chain_costs_exactly_opt() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("u.json");
    let out = lgt(&[
        "run", "--policy", "uniform", "--adversary", "max_mass", "--width", "1", "--depth", "12", "--report",
        path(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let steps = json[0]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 12);
    assert_eq!(steps.last().unwrap()["ratio"].as_f64(), Some(1.0));
}

#[test]
fn same_arguments_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("r.json");
    assert!(lgt(&["gen", "random", "--width", "4", "--depth", "60", "--seed", "9", "-o", path(&inst)]).status.success());
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let report = dir.path().join(name);
        let out = lgt(&[
            "run", "--policy", "random_dfs", "--instance", path(&inst), "--mode", "randomized", "--trials", "50",
            "--seed", "3", "--report", path(&report),
        ]);
        assert_eq!(out.status.code(), Some(0));
        bytes.push(std::fs::read(report).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);

    let mut bench = Vec::new();
    for (name, threads) in [("x.json", "1"), ("y.json", "4")] {
        let report = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_lgt"))
            .env("LGT_THREADS", threads)
            .args(["bench", "--widths", "2,3", "--depth", "30", "--report", path(&report)])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        bench.push(std::fs::read(report).unwrap());
    }
    assert_eq!(bench[0], bench[1]);
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(lgt(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(lgt(&["gen", "star", "--depth", "4", "-o", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(
        lgt(&["run", "--policy", "dfs", "--instance", "/nonexistent.json", "--report", "r.csv"]).status.code(),
        Some(1)
    );
    assert_eq!(lgt(&["--help"]).status.code(), Some(0));
}

#[test]
fn bench_rejects_invalid_cells_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("b.csv");
    // comb needs depth > 2w, which fails for w = 8
    let out = lgt(&["bench", "--widths", "2,8", "--depth", "10", "--families", "comb", "--report", path(&report)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!report.exists());
}
