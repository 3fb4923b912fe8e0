use std::path::Path;
use std::process::{Command, Output};

fn sparse_slam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-slam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn simulate_run_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");

    let sim = sparse_slam(&["simulate", "--out", arg(&data), "--seed", "1", "--format", "crazyflie"]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let log = data.join("square_loop.csv");
    let relations = data.join("relations.txt");
    assert!(log.exists() && relations.exists() && data.join("truth.txt").exists());

    let run = sparse_slam(&[
        "run",
        "--log",
        arg(&log),
        "--format",
        "crazyflie",
        "--beams",
        "4",
        "--range-cap",
        "5",
        "--multiscan",
        "120",
        "--cell",
        "0.1",
        "--kernel",
        "k3",
        "--relations",
        arg(&relations),
        "--out",
        arg(&out),
        "--deterministic",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["trajectory.txt", "map.pgm", "metrics.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(
        metrics.contains("abs_trans_mean") && metrics.contains("frontend_mean"),
        "{metrics}"
    );

    let eval = sparse_slam(&[
        "evaluate",
        "--traj",
        arg(&out.join("trajectory.txt")),
        "--relations",
        arg(&relations),
    ]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(!eval.stdout.is_empty());

    let truth = sparse_slam(&[
        "evaluate",
        "--traj",
        arg(&data.join("truth.txt")),
        "--relations",
        arg(&relations),
    ]);
    assert!(truth.status.success());
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.log");
    let cases: [&[&str]; 4] = [
        &["run", "--log", arg(&missing), "--out", arg(&out)],
        &["run", "--format", "synthetic", "--kernel", "k4", "--out", arg(&out)],
        &["run", "--format", "laser", "--out", arg(&out)],
        &["evaluate", "--traj", arg(&missing), "--relations", arg(&missing)],
    ];
    for args in cases {
        let o = sparse_slam(args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let empty = dir.path().join("empty.log");
    std::fs::write(&empty, "# nothing here\n").unwrap();
    let o = sparse_slam(&["run", "--log", arg(&empty), "--format", "carmen", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(sparse_slam(&["--help"]).status.success());
}
