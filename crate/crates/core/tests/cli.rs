use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glosten-eq"))
}

fn run(args: &[&str], out: &Path) -> i32 {
    let status = bin().args(args).arg("--out").arg(out).output().unwrap().status;
    status.code().unwrap()
}

#[test]
fn solve_bernoulli_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["solve", "--family", "bernoulli", "--N", "2"], dir.path());
    assert_eq!(code, 0);
    let sol: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["status"], "converged");
    assert!((sol["spread"].as_f64().unwrap() - 2.0).abs() < 1e-6);

    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(lines.next().unwrap(), "x,F,h,IS,exec_price,profit,informed_tail,total_tail,variant");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    // 17 significant digits
    let mantissa = row[1].split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.replace('.', "").len(), 17, "{}", row[1]);

    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(conv.starts_with("iteration,sup_distance"));
}

#[test]
fn solve_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(&["solve", "--family", "trinomial", "--N", "1"], d.path()), 0);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("curves.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn divergent_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve", "--family", "student", "--alpha", "3", "--N", "1"], dir.path()), 2);
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve", "--family", "no_such_law"], dir.path()), 1);
    assert_eq!(run(&["solve", "--family", "gaussian", "--N", "0"], dir.path()), 1);
}

#[test]
fn validate_bernoulli_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate", "--family", "bernoulli", "--N", "2"], dir.path()), 0);
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(rep["all_pass"], true);
}

#[test]
fn sweep_over_n_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["sweep", "--family", "trinomial", "--axis", "N", "--values", "1,2"], dir.path());
    assert_eq!(code, 0);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(dir.path().join("N=1").join("solution.json").exists());
    assert!(dir.path().join("N=2").join("curves.csv").exists());
}
