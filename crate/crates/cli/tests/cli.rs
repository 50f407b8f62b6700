use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mor2s(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mor2s"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Non-comment lines of a report.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SMALL: &[&str] = &["--set", "n=24", "--set", "n_t=60", "--set", "n_max=20", "--set", "kappa=20"];

fn with<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(extra);
    v
}

#[test]
fn reduce_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = mor2s(&with("reduce", SMALL), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["manifest.txt", "basis_u.bin", "basis_f.bin", "reduce.csv", "reduce_timing.csv", "singvals_u_left.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = rows(&dir.path().join("reduce.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!((r[0][0].as_str(), r[1][0].as_str()), ("U", "F"));

    let o = mor2s(&with("solve", SMALL), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = rows(&dir.path().join("solve.csv"));
    let err: f64 = s[0][8].parse().unwrap();
    assert!(err < 1e-2, "mean error {err}");
    let curve = rows(&dir.path().join("error_vs_time.csv"));
    assert_eq!(curve.len(), 60);
}

#[test]
fn reduce_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(code(&mor2s(&with("reduce", SMALL), dir.path())), 0);
    let first = (read("reduce.csv"), read("basis_u.bin"), read("basis_f.bin"));
    assert_eq!(code(&mor2s(&with("reduce", SMALL), dir.path())), 0);
    assert_eq!(first, (read("reduce.csv"), read("basis_u.bin"), read("basis_f.bin")));
}

#[test]
fn solve_rejects_mismatched_or_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mor2s(&with("reduce", SMALL), dir.path())), 0);
    let o = mor2s(&["solve", "--set", "n=16"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("n = 24"), "{}", stderr(&o));
    let o = mor2s(&["solve", "--set", "n=24", "--set", "param.eps1=0.02"], dir.path());
    assert_eq!(code(&o), 4);

    fs::remove_file(dir.path().join("basis_f.bin")).unwrap();
    let o = mor2s(&with("solve", SMALL), dir.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("basis_f.bin"), "{}", stderr(&o));

    let empty = tempfile::tempdir().unwrap();
    let o = mor2s(&["solve"], empty.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("manifest.txt"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["reduce", "--set", "n=4"],
        vec!["reduce", "--set", "tau=1.5"],
        vec!["reduce", "--set", "nonsense=1"],
        vec!["reduce", "--set", "problem=nope"],
        vec!["funcapprox", "--set", "problem=ac1"],
        vec!["reduce", "--config", "/definitely/not/here.cfg"],
    ] {
        let o = mor2s(&args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# heat run\nproblem = heat\nn = 16\nn_t = 40\nn_max = 12\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = mor2s(&["full", "--config", cfg, "--set", "n=20"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("full.csv")).unwrap();
    assert!(text.contains("# problem = heat\n") && text.contains("# n = 20\n"));
    assert_eq!(rows(&dir.path().join("full_final.csv")).len(), 20);
}

#[test]
fn vector_memory_guard() {
    let dir = tempfile::tempdir().unwrap();
    let o = mor2s(&["funcapprox", "--set", "problem=phi1", "--set", "n=600", "--set", "methods=vector"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("memory guard"), "{}", stderr(&o));
}

#[test]
fn funcapprox_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["funcapprox", "--set", "problem=phi2", "--set", "n=48", "--set", "n_test=30", "--set", "kappa=20"];
    let o = mor2s(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&dir.path().join("funcapprox.csv"));
    let names: Vec<&str> = r.iter().map(|row| row[0].as_str()).collect();
    assert_eq!(names, ["dynamic", "vanilla", "vector"]);
    assert_eq!(r[2][4], "-");
    assert_eq!(r[1][2], "40");
    let first = fs::read(dir.path().join("funcapprox.csv")).unwrap();
    assert_eq!(code(&mor2s(&args, dir.path())), 0);
    assert_eq!(first, fs::read(dir.path().join("funcapprox.csv")).unwrap());
}

#[test]
fn sweep_single_tau_and_constant_stream() {
    let dir = tempfile::tempdir().unwrap();
    let o = mor2s(&["sweep-tau", "--set", "n=16", "--set", "n_t=40", "--set", "taus=0.001"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("sweep_tau.csv")).unwrap();
    assert!(!text.contains("# trend"));
    assert_eq!(rows(&dir.path().join("sweep_tau.csv")).len(), 4);

    let o = mor2s(
        &["sweep-tau", "--set", "problem=const", "--set", "n=16", "--set", "methods=dynamic", "--set", "n_t=40"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&dir.path().join("sweep_tau.csv"));
    let state: Vec<_> = r.iter().filter(|row| row[2] == "U").collect();
    assert_eq!(state.len(), 3);
    assert!(state.iter().all(|row| row[4] == "1"), "{state:?}");
}

#[test]
fn bench_writes_breakdown_and_scan() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = with("bench", SMALL);
    args.extend(["--set", "bench_ns=16,24", "--set", "bench_steps=10", "--set", "bench_k=4", "--set", "bench_p=5"]);
    let o = mor2s(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&dir.path().join("bench.csv"));
    assert_eq!(r.len(), 2);
    assert!(r[0][9].ends_with('n') && r[1][9].ends_with("n^2"), "{r:?}");
    assert_eq!(rows(&dir.path().join("online_cost_timing.csv")).len(), 2);
    assert_eq!(rows(&dir.path().join("bench_timing.csv")).len(), 2);
}
