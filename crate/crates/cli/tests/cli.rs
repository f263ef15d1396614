use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nestree"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_two_points() {
    let o = run(&["validate", fixture("two_point.json").to_str().unwrap()]);
    let v = stdout_json(&o);
    assert_eq!(v["n"], 2);
    assert_eq!(v["config"]["command"]["command"], "validate");
}

#[test]
fn validate_reports_triangle_violation() {
    let o = run(&["validate", fixture("bad_triangle.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["causes"][0].as_str().unwrap().contains("triangle"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["embed"]).status.code(), Some(2));
    assert_eq!(run(&["outlier-embed", "x.json"]).status.code(), Some(2));
    let p = fixture("two_point.json");
    let o = run(&["evaluate", p.to_str().unwrap(), "--sampler", "nested", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frt_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "random", "--n", "7", "--seed", "3"]);
    let m = write(&dir, "m.json", std::str::from_utf8(&gen.stdout).unwrap());
    let a = run(&["embed", "frt", &m, "--seed", "11"]);
    let b = run(&["embed", "frt", &m, "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["embed", "frt", &m, "--seed", "12"]);
    assert_eq!(stdout_json(&c)["config"]["seed"], 12);
}

#[test]
fn missing_seed_is_printed_and_recorded() {
    let o = run(&["gen", "expander-clique", "--n", "10"]);
    let v = stdout_json(&o);
    let err = String::from_utf8(o.stderr).unwrap();
    let printed: u64 = err.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    assert_eq!(v["config"]["seed"].as_u64(), Some(printed));
    let again = run(&["gen", "expander-clique", "--n", "10", "--seed", &printed.to_string()]);
    assert_eq!(stdout_json(&again)["dist"], v["dist"]);
}

#[test]
fn nested_outputs_tree_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "planted", "--core", "5", "--far", "2", "--seed", "1"]);
    let m = write(&dir, "m.json", std::str::from_utf8(&gen.stdout).unwrap());
    let s = write(&dir, "s.txt", "t0\nt1\nt2\nt3\nt4\n");
    let v = stdout_json(&run(&["embed", "nested", &m, "--subset", &s, "--seed", "4"]));
    let members: usize = v["trace"]["clusters"].as_array().unwrap().iter().map(|c| c["members"].as_array().unwrap().len()).sum();
    assert_eq!(members, 2);
    assert!(v["tree"]["h"].as_u64().unwrap() > 0);
}

#[test]
fn outlier_embed_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "expander-clique", "--n", "10", "--seed", "2"]);
    let m = write(&dir, "m.json", std::str::from_utf8(&gen.stdout).unwrap());
    let v = stdout_json(&run(&["outlier-embed", &m, "--c", "2", "--eps", "1", "--seed", "1", "--samples", "2", "--k-max", "2"]));
    assert_eq!(v["samples"].as_array().unwrap().len(), 2);
    assert!(v["outliers"].is_array());
    let jobs1 = run(&["evaluate", &m, "--sampler", "frt", "--samples", "30", "--seed", "5", "--jobs", "1"]);
    let jobs4 = run(&["evaluate", &m, "--sampler", "frt", "--samples", "30", "--seed", "5", "--jobs", "4"]);
    let (a, b) = (stdout_json(&jobs1), stdout_json(&jobs4));
    assert_eq!(a["pairs"], b["pairs"]);
    assert!(a["min_ratio"].as_f64().unwrap() >= 1.0);
    let csv = run(&["evaluate", &m, "--sampler", "outlier", "--c", "2", "--k-max", "1", "--samples", "5", "--seed", "1", "--format", "csv"]);
    assert!(String::from_utf8(csv.stdout).unwrap().starts_with("pair,d,mean_ratio\n"));
}

#[test]
fn mcct_on_ultrametric() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "ultrametric", "--n", "6", "--seed", "1"]);
    let m = write(&dir, "m.json", std::str::from_utf8(&gen.stdout).unwrap());
    let d = write(&dir, "d.json", r#"{"demands": [["t0", "t1", 5], ["t0", "t2", 5], ["t0", "t3", 5], ["t4", "t5", 1]]}"#);
    let v = stdout_json(&run(&["mcct", &m, "--demands", &d, "--k", "1"]));
    assert_eq!(v["outliers"], serde_json::json!(["t0"]));
    assert!(v["cost"].as_f64().unwrap() <= 3.0 * v["lp_objective"].as_f64().unwrap() + 1e-7);

    let gen = run(&["gen", "random", "--n", "6", "--seed", "1"]);
    let r = write(&dir, "r.json", std::str::from_utf8(&gen.stdout).unwrap());
    let d = write(&dir, "d2.json", r#"{"demands": [["p0", "p1", 1]]}"#);
    let o = run(&["mcct", &r, "--demands", &d, "--k", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("ultrametric"));
}

#[test]
fn app_runs_both_problems() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "random", "--n", "8", "--seed", "2"]);
    let m = write(&dir, "m.json", std::str::from_utf8(&gen.stdout).unwrap());
    let q = write(
        &dir,
        "q.json",
        r#"{"requests": [{"s": "p0", "t": "p3", "d": 2}, {"s": "p1", "t": "p5"}, {"s": 2, "t": 7, "d": 3}], "capacity": 3, "g": [[1, 1], [4, 2]]}"#,
    );
    for problem in ["buy-at-bulk", "dial-a-ride"] {
        let v = stdout_json(&run(&["app", problem, &m, "--requests", &q, "--seed", "5", "--k-max", "2"]));
        assert!(v["cost"].as_f64().unwrap() <= v["naive_cost"].as_f64().unwrap());
        assert!(!v["rungs"].as_array().unwrap().is_empty());
        assert_eq!(v["config"]["command"]["problem"], problem);
    }
    let bad = write(&dir, "bad.json", r#"{"requests": [{"s": "zz", "t": "p1"}]}"#);
    let o = run(&["app", "buy-at-bulk", &m, "--requests", &bad, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
}
