use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_varioeta");

fn varioeta(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn fig2_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.csv");
    let o = varioeta(&[
        "fig2",
        "--n",
        "500",
        "--n",
        "1000",
        "--trials",
        "2000",
        "--seed",
        "42",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,trials,empirical_var,asymptotic,abs_error,oracle_var")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "500");
    assert_eq!(rows[1][1], "2000");
    for r in &rows {
        let v: Vec<f64> = r.iter().map(|f| f.parse().unwrap()).collect();
        assert_eq!(v[4], (v[2] - v[3]).abs());
        assert_eq!(v[5], 1.0 / (12.0 * v[0]));
    }
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn fig2_rejects_small_n() {
    let o = varioeta(&["fig2", "--n", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(">= 2"));
}

#[test]
fn fig2_rejects_few_trials() {
    let o = varioeta(&["fig2", "--n", "10", "--trials", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_flag_prints_usage() {
    let o = varioeta(&["validate", "--frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("x.csv");
    let o = varioeta(&[
        "fig2",
        "--n",
        "10",
        "--trials",
        "1000",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot write"));
}

#[test]
fn validate_is_green() {
    let o = varioeta(&["validate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("NOTE closed form"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn printed_exponent_fails_gamma_check() {
    let o = varioeta(&["gamma-check", "--printed-exponent"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL gamma s=0.5"));
    assert_eq!(code(&varioeta(&["gamma-check"])), 0);
    assert_eq!(code(&varioeta(&["gf-check"])), 0);
}

#[test]
fn bench_zero_steps_is_header_only() {
    let o = varioeta(&["bench", "--steps", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "method,step,error\n");
}

#[test]
fn bench_warns_on_large_batch() {
    let o = varioeta(&[
        "bench",
        "--patterns",
        "100",
        "--batch",
        "20",
        "--steps",
        "10",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("M >> N"));
    let o = varioeta(&[
        "bench",
        "--patterns",
        "100",
        "--batch",
        "200",
        "--steps",
        "10",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_timings_add_column() {
    let o = varioeta(&[
        "bench",
        "--steps",
        "20",
        "--method",
        "varioeta-asymptotic",
        "--timings",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("method,step,error,wall_time\n"));
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn compare_reports_both_modes() {
    let o = varioeta(&[
        "compare",
        "--patterns",
        "20000",
        "--batch",
        "1000",
        "--steps",
        "10",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "recursive");
    assert_eq!(rows[1][0], "asymptotic");
    assert_eq!(rows[0][3], rows[1][3], "batch fingerprints");
    assert!(String::from_utf8_lossy(&o.stderr).contains("s/step"));
}

#[test]
fn config_file_supplies_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig2.cfg");
    fs::write(
        &cfg,
        "# small grid\nn = 300, 400\ntrials = 1000\nseed = 5\n",
    )
    .unwrap();
    let from_file = varioeta(&["fig2", "--config", path_str(&cfg)]);
    let from_flags = varioeta(&[
        "fig2", "--n", "300", "--n", "400", "--trials", "1000", "--seed", "5",
    ]);
    assert_eq!(code(&from_file), 0);
    assert_eq!(from_file.stdout, from_flags.stdout);

    let overridden = varioeta(&["fig2", "--config", path_str(&cfg), "--seed", "6"]);
    assert_ne!(overridden.stdout, from_file.stdout);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (i, args) in [
        vec!["fig2", "--n", "250", "--trials", "1500", "--seed", "3"],
        vec![
            "bench",
            "--problem",
            "least-squares",
            "--method",
            "varioeta-asymptotic",
            "--steps",
            "200",
        ],
        vec!["validate"],
    ]
    .into_iter()
    .enumerate()
    {
        let a = dir.path().join(format!("{i}a.csv"));
        let b = dir.path().join(format!("{i}b.csv"));
        for out in [&a, &b] {
            let mut full = args.clone();
            full.extend(["--out", path_str(out)]);
            assert_eq!(code(&varioeta(&full)), 0, "{full:?}");
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{args:?}");
    }
}
