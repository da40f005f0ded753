use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nalab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nalab(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn graph_count(text: &str) -> usize {
    text.lines().filter(|l| l.starts_with("g ")).count()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gen_er_constdeg_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gen.conf", "kind = er-constdeg\nn = 64\ncount = 200\nseed = 11\n");
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(&["gen", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["gen", "--config", &cfg, "--out", b.to_str().unwrap()]);
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(graph_count(&String::from_utf8(a).unwrap()), 200);
    let other = ok(&["gen", "--config", &cfg, "--seed", "12"]);
    assert_ne!(other.as_bytes(), b.as_slice());
}

#[test]
fn gen_path_training_set() {
    let text = ok(&["gen", "--set", "kind=path", "--set", "k=2", "--set", "x=50"]);
    assert_eq!(graph_count(&text), 3);
    assert!(text.lines().any(|l| l == "t 2 50"));
}

#[test]
fn train_smoke_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let stdout = ok(&["train", "--steps", "100", "--set", "eval_sizes=16", "--out", run.to_str().unwrap()]);
    assert!(stdout.starts_with("step 100 "));
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("step,loss_emp,loss_reg,loss_total,score_general-16"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,") && rows[1].starts_with("100,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 5 && !r.ends_with(',')));

    let ckpt = run.join("checkpoint.txt");
    let config = run.join("config.txt");
    assert!(fs::read_to_string(&config).unwrap().contains("steps = 100"));
    let data = dir.path().join("test.txt");
    ok(&["gen", "--set", "n=12", "--set", "count=5", "--out", data.to_str().unwrap()]);
    let scores = ok(&["eval", ckpt.to_str().unwrap(), data.to_str().unwrap()]);
    let row = scores.lines().nth(1).unwrap();
    let score: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(score.is_finite() && score >= 0.0);

    // the same seed and config reproduce the metrics byte for byte
    let again = dir.path().join("again");
    ok(&["train", "--config", config.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
}

#[test]
fn missing_train_set_is_a_config_error() {
    let out = nalab(&["train", "--steps", "10", "--set", "train_file=/nonexistent/train.txt"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config error") && err.contains("train set"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.conf", "steps = 10\nlearning_rate = 0.1\n");
    let out = nalab(&["train", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn missing_checkpoint_fails() {
    let out = nalab(&["eval", "/nonexistent/ckpt.txt", "/nonexistent/data.txt"]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_config_defaults() {
    let help = ok(&["--help"]);
    assert!(help.contains("steps") && help.contains("[default: 160000]"));
    assert!(help.contains("weight_high"));
}

#[test]
fn oracle_bf_on_path() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p.txt", "g 3 0 1\n# beta 1000\nv 0 0\nv 1 1000\nv 2 1000\ne 0 1 4\ne 1 2 5\n");
    assert_eq!(ok(&["oracle", "bf", &g, "--k", "1"]), "vertex,value\n0,0\n1,4\n2,1000\n");
    assert_eq!(ok(&["oracle", "sssp", &g]), "vertex,value\n0,0\n1,4\n2,9\n");
    assert_eq!(ok(&["oracle", "mst", &g]), "graph,value\n0,9\n");
}

#[test]
fn wl_cycle_versus_two_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let c6 = "g 6 0 0\ne 0 1 1\ne 1 2 1\ne 2 3 1\ne 3 4 1\ne 4 5 1\ne 5 0 1\n";
    let tt = "g 6 0 0\ne 0 1 1\ne 1 2 1\ne 2 0 1\ne 3 4 1\ne 4 5 1\ne 5 3 1\n";
    let f = write(dir.path(), "pair.txt", &format!("{c6}\n{tt}"));
    let wl1 = ok(&["wl", &f]);
    assert!(wl1.starts_with("mode,verdict\nwl1,not-distinguished\n"));
    assert!(wl1.contains("graph,color,count\n0,0,6\n1,0,6\n"));
    assert!(ok(&["wl", &f, "--mode", "wl11"]).starts_with("mode,verdict\nwl11,distinguished\n"));
    assert!(!nalab(&["wl", &f, "--mode", "iwl"]).status.success());
}

#[test]
fn check_suite_passes() {
    let table = ok(&["check", "wl"]);
    assert!(table.lines().count() >= 3);
    assert!(table.lines().skip(1).all(|l| l.contains("PASS")));
    assert!(!nalab(&["check", "nope"]).status.success());
}
