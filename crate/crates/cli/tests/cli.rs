use std::path::Path;
use std::process::Command;

fn kronsolve() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kronsolve"))
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn check_passes() {
    let stdout = run(kronsolve().arg("check"));
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn synth_regression_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results.csv");
    run(kronsolve()
        .args([
            "synth-regression",
            "--n",
            "16",
            "--d",
            "3",
            "--seeds",
            "0,1",
            "--solvers",
            "kronmatmul,fast",
            "--repetitions",
            "1",
            "--alpha",
            "0.01",
            "--out",
        ])
        .arg(&out));
    let rows = lines(&out);
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[0].starts_with("solver,n,d,order,seed,loss,ratio"));
}

#[test]
fn tucker_round_trip_through_tensor_file() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.ktn");
    let report = dir.path().join("report.csv");
    run(kronsolve()
        .args(["synth-tensor", "--shape", "6,5,4", "--rank", "2,2,2", "--out"])
        .arg(&x));
    assert_eq!(std::fs::metadata(&x).unwrap().len(), 4 + 4 + 1 + 3 * 8 + 120 * 8);
    run(kronsolve()
        .args([
            "tucker", "--core", "2,2,2", "--mode", "fast", "--sweeps", "3", "--input",
        ])
        .arg(&x)
        .arg("--out")
        .arg(&report));
    assert_eq!(lines(&report).len(), 3 + 1);
}

#[test]
fn bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ktn");
    std::fs::write(&bad, b"NOPE0000").unwrap();
    let out = kronsolve()
        .args(["tucker", "--core", "2,2", "--input"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("r.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = kronsolve()
        .args(["synth-regression", "--solvers", "bogus"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
