use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hermit(args: &[&str]) -> Output {
    hermit_env(args, None)
}

fn hermit_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hermit"));
    c.args(args).env_remove("HERMIT_SEED");
    if let Some(s) = seed {
        c.env("HERMIT_SEED", s);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "--rows", "20000", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = hermit(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path(), "a.csv", &["--seed", "5"]);
    let b = dataset(dir.path(), "b.csv", &["--seed", "5"]);
    let c = dataset(dir.path(), "c.csv", &["--seed", "6"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let flagged = dataset(dir.path(), "f.csv", &["--seed", "9"]);
    let env_out = dir.path().join("e.csv");
    let o = hermit_env(&["generate", "--rows", "20000", "--seed", "1", "--out", s(&env_out)], Some("9"));
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(flagged).unwrap(), std::fs::read(env_out).unwrap());
    let o = hermit_env(&["generate", "--out", s(&dir.path().join("x.csv"))], Some("nope"));
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&hermit(&[])), 2);
    assert_eq!(code(&hermit(&["bench"])), 2);
    assert_eq!(code(&hermit(&["generate", "--rows", "ten", "--out", "x"])), 2);
    assert_eq!(code(&hermit(&["generate", "--kind", "cubic", "--out", "x"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "d.csv", &[]);
    assert_eq!(code(&hermit(&["bench", "--data", s(&data), "--workload", "scan"])), 2);
    assert_eq!(code(&hermit(&["bench", "--data", s(&data), "--params", "node_fanout=1"])), 2);
    assert_eq!(code(&hermit(&["bench", "--data", s(&data), "--params", "bogus=3"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&hermit(&["build", "--data", s(&missing)])), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "A:i64,B:f64\n1,2.0\n2,oops\n").unwrap();
    assert_eq!(code(&hermit(&["build", "--data", s(&bad)])), 3);
    let data = dataset(dir.path(), "d.csv", &[]);
    assert_eq!(code(&hermit(&["build", "--data", s(&data), "--target", "Z"])), 3);
}

#[test]
fn unknown_index_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "d.csv", &[]);
    assert_eq!(code(&hermit(&["build", "--data", s(&data), "--index", "btree"])), 5);
    assert_eq!(code(&hermit(&["bench", "--data", s(&data), "--index", "lsm"])), 5);
}

#[test]
fn verified_bench_report_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "d.csv", &["--noise", "0.05"]);
    for index in ["hermit", "baseline", "cm"] {
        for workload in ["range", "point", "insert", "mixed"] {
            let out = dir.path().join(format!("{index}-{workload}.json"));
            let o = hermit(&[
                "bench", "--data", s(&data), "--index", index, "--workload", workload, "--ops", "400",
                "--selectivity", "0.001", "--verify", "--json", s(&out),
            ]);
            assert_eq!(code(&o), 0, "{index} {workload}: {}", String::from_utf8_lossy(&o.stderr));
            let r = json(&out);
            assert_eq!(r["schema_version"], 1);
            assert_eq!(r["verification"]["mismatches"], 0);
            let f = r["time_fractions"].as_object().unwrap();
            let sum: f64 = f.values().map(|v| v.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() <= 1e-6, "fractions sum to {sum}");
            let m = r["memory"].as_object().unwrap();
            let parts: u64 = m.iter().filter(|(k, _)| *k != "total").map(|(_, v)| v.as_u64().unwrap()).sum();
            assert_eq!(parts, m["total"].as_u64().unwrap());
        }
    }
}

#[test]
fn build_reports_tree_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "d.csv", &[]);
    let o = hermit(&["build", "--data", s(&data), "--stats", "--threads", "2", "--params", "node_fanout=4,error_bound=1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!o.stdout.is_empty());
}

#[test]
fn memory_command_scales_with_index_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), "d.csv", &["--extra-targets", "3"]);
    let out = dir.path().join("m.json");
    let o = hermit(&["memory", "--data", s(&data), "--indexes", "4", "--kinds", "hermit,baseline,cm", "--json", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["schema_version"], 1);
    let points = r["points"].as_array().unwrap();
    assert_eq!(points.len(), 12);
    let total = |kind: &str, n: u64| {
        points
            .iter()
            .find(|p| p["kind"] == kind && p["indexes"] == n)
            .map(|p| p["memory"]["total"].as_u64().unwrap())
            .unwrap()
    };
    for n in 1..=4 {
        assert!(total("hermit", n) < total("baseline", n));
    }
    assert!(total("baseline", 4) > total("baseline", 1));
}

#[test]
fn reorg_trace_emits_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = hermit(&[
        "reorg-trace", "--rows", "30000", "--initial", "3000", "--interval", "0.3", "--duration", "1.5", "--sample", "0.25",
        "--json", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["inserted_rows"], 27000);
    assert!(r["samples"].as_array().unwrap().len() >= 4);
    assert!(!r["stages"].as_array().unwrap().is_empty());
}
