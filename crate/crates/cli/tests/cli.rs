//! End-to-end tests of the `carstat` binary: exit codes, output formats,
//! and determinism of the simulation harness.

use std::path::Path;
use std::process::Command;

fn carstat() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carstat"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Hand dataset: 12 rows, 2 strata, 1 treatment; cell means chosen so the
/// estimates are exact fractions.
const HAND_CSV: &str = "y,a,s\n\
1.0,0,A\n3.0,0,A\n2.0,0,A\n6.0,1,A\n8.0,1,A\n10.0,1,A\n\
2.0,0,B\n4.0,0,B\n9.0,1,B\n5.0,1,B\n7.0,1,B\n3.0,1,B\n";

#[test]
fn analyze_hand_dataset_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("hand.csv");
    write(&input, HAND_CSV);
    let out = carstat()
        .args(["analyze", "--input"])
        .arg(&input)
        .args(["--estimator", "sat", "--variance", "new", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    // Cell means: A: control 2, treated 8 (contrast 6); B: control 3,
    // treated 6 (contrast 3); both strata have 6 units, so the ATE is 4.5.
    let row = text
        .lines()
        .find(|l| l.starts_with("sat,new,1,"))
        .expect("coefficient row");
    let estimate: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((estimate - 4.5).abs() < 1e-12, "{row}");
    // Stratum mapping is echoed.
    assert!(text.contains("A -> 1"));
    assert!(text.contains("B -> 2"));
}

#[test]
fn analyze_rejects_malformed_row_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "y,a,s\n1.0,0,A\nabc,1,A\n");
    let out = carstat()
        .args(["analyze", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn analyze_empty_cell_is_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("gap.csv");
    // Stratum B has no control units.
    write(&input, "y,a,s\n1.0,0,A\n2.0,1,A\n3.0,1,B\n");
    let out = carstat()
        .args(["analyze", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("empty cell (0,2)"), "stderr: {err}");
}

#[test]
fn analyze_nonfinite_outcome_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nan.csv");
    write(&input, "y,a,s\n1.0,0,A\nNaN,1,A\n");
    let out = carstat()
        .args(["analyze", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-finite outcome at record 1"), "stderr: {err}");
}

#[test]
fn analyze_joint_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.csv");
    // Two treatments; compare them with psi = (1, -1).
    let mut text = String::from("y,a,s\n");
    for (y, a) in [
        (1.0, 0),
        (2.0, 0),
        (3.5, 1),
        (4.5, 1),
        (3.0, 2),
        (5.2, 2),
    ] {
        text.push_str(&format!("{y},{a},only\n"));
    }
    write(&input, &text);
    let hyp = dir.path().join("hyp.csv");
    write(&hyp, "psi_1,psi_2,c\n1,-1,0\n");
    let out = carstat()
        .args(["analyze", "--input"])
        .arg(&input)
        .args(["--variance", "new", "--format", "csv", "--hypothesis"])
        .arg(&hyp)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("wald,sat,new,")), "{text}");
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let status = carstat()
            .args([
                "simulate", "t1", "--reps", "40", "--n", "200", "--seed", "3", "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b);
    // Output parses back as a table file covering the full grid.
    let table =
        carstat::montecarlo::read_table(std::io::BufReader::new(a.as_slice())).unwrap();
    assert_eq!(table.cells.len(), 96);
    assert_eq!(table.params.reps, 40);
}

#[test]
fn simulate_check_failure_exits_4() {
    // 40 replications cannot match the reference at a hair-thin tolerance.
    let out = carstat()
        .args([
            "simulate", "t1", "--reps", "40", "--n", "200", "--seed", "3", "--check",
            "--tol-pp", "0.0001", "--out",
        ])
        .arg(tempfile::tempdir().unwrap().path().join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fail:"), "stderr: {err}");
}

#[test]
fn simulate_rejects_unknown_table() {
    let out = carstat().args(["simulate", "t9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn power_without_a_mode_is_an_input_error() {
    let out = carstat().args(["power", "--alpha", "0.05"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn power_direct_mode_reference_values() {
    let out = carstat()
        .args(["power", "--df", "1", "--mu", "0,1,4", "--alpha", "0.05"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let powers: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(powers.len(), 3);
    assert!((powers[0] - 0.05).abs() < 1e-9, "mu=0 gives alpha");
    assert!(powers[1] > powers[0] && powers[2] > powers[1], "monotone");
    assert!((powers[2] - 0.516).abs() < 5e-4, "mu=4 reference value");
}

#[test]
fn moments_file_feeds_power_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("m1.moments");
    let out = carstat()
        .args([
            "moments", "--model", "1", "--strata", "4", "--budget", "200000", "--seed", "5",
            "--out",
        ])
        .arg(&cache)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("varsigma2_H"), "{summary}");

    // Identical invocation writes an identical file.
    let cache2 = dir.path().join("m1b.moments");
    carstat()
        .args([
            "moments", "--model", "1", "--strata", "4", "--budget", "200000", "--seed", "5",
            "--out",
        ])
        .arg(&cache2)
        .status()
        .unwrap();
    assert_eq!(
        std::fs::read(&cache).unwrap(),
        std::fs::read(&cache2).unwrap()
    );

    let out = carstat()
        .args(["power", "--moments"])
        .arg(&cache)
        .args(["--pi", "0.3", "--theta", "0,0.2", "--n-ref", "500"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let p0: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
    assert!((p0 - 0.05).abs() < 1e-9, "theta=0 gives alpha, got {p0}");
}
