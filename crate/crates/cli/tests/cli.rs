use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_slc"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn identities_default_passes_and_writes_every_suite() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify-identities", "--out", "out"], "samples = 300\n");
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let files = std::fs::read_dir(dir.path().join("out")).unwrap().count();
    assert_eq!(files, 8);
    let csv = read(dir.path().join("out/identities_newton_vs_kronecker.csv"));
    assert_eq!(csv.lines().count(), 1 + 5 * 300);
}

#[test]
fn identities_fault_injection_exits_one_with_counterexample() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &["verify-identities", "--out", "out"],
        "samples = 50\ninject_fault = true\n",
    );
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("counterexample in product_identity: sample 0"));
    let csv = read(dir.path().join("out/identities_product_identity.csv"));
    assert!(csv.lines().skip(1).any(|l| l.split(',').nth(3) == Some("1")));
}

#[test]
fn identities_seed_changes_samples_not_verdict() {
    let dir = TempDir::new().unwrap();
    let cfg = "samples = 100\n";
    let a = run(dir.path(), &["verify-identities", "--out", "a", "--seed", "1"], cfg);
    let b = run(dir.path(), &["verify-identities", "--out", "b", "--seed", "2"], cfg);
    let c = run(dir.path(), &["verify-identities", "--out", "c", "--seed", "1"], cfg);
    assert_eq!((code(&a), code(&b), code(&c)), (0, 0, 0));
    let name = "identities_linearization_times_lift.csv";
    let (fa, fb, fc) = (
        read(dir.path().join("a").join(name)),
        read(dir.path().join("b").join(name)),
        read(dir.path().join("c").join(name)),
    );
    assert_ne!(fa, fb);
    assert_eq!(fa, fc);
}

#[test]
fn jacobi_critical_convex_and_supercritical() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify-jacobi", "--out", "j1"], "n = 3\nmode = critical\nsamples = 10000\n");
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("min slack = "));
    assert!(stdout(&o).contains("over 10000 samples"));

    let o = run(dir.path(), &["verify-jacobi", "--out", "j2"], "n = 3\ntheta = 3*pi/4\n");
    assert_eq!(code(&o), 2);

    let o = run(dir.path(), &["verify-jacobi", "--out", "j3"], "n = 5\nmode = convex\nsamples = 2000\n");
    assert_eq!(code(&o), 0);
    assert_eq!(read(dir.path().join("j3/jacobi.csv")).lines().count(), 2001);
}

#[test]
fn jacobi_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = "n = 4\nsamples = 500\n";
    run(dir.path(), &["verify-jacobi", "--out", "a", "--seed", "9"], cfg);
    run(dir.path(), &["verify-jacobi", "--out", "b", "--seed", "9"], cfg);
    assert_eq!(read(dir.path().join("a/jacobi.csv")), read(dir.path().join("b/jacobi.csv")));
}

#[test]
fn solve_cap_has_error_column_and_svg() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["solve", "--out", "s", "--svg"], "theta = pi/2\nspacing = 1/16\n");
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = read(dir.path().join("s/solution.csv"));
    let err = column(&csv, "error");
    assert!(err.iter().all(|e| e.abs() < 1e-3));
    assert!(read(dir.path().join("s/kappa_1.svg")).starts_with("<svg"));
    assert!(dir.path().join("s/history.csv").exists());
}

#[test]
fn solve_flat_problem_is_zero() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["solve", "--out", "s"], "theta = 0\nboundary = flat\nspacing = 1/8\n");
    assert_eq!(code(&o), 0);
    let u = column(&read(dir.path().join("s/solution.csv")), "u");
    assert!(u.iter().all(|&v| v == 0.0));
}

#[test]
fn solve_rejects_maximal_phase_and_bad_config() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["solve", "--out", "s"], "theta = pi\n")), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--out", "s"], "n = 3\ntheta = 3*pi/2\n")), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--out", "s"], "theta\n")), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--out", "s"], "spacing = 1/16\n")), 2);
}

#[test]
fn solve_non_convergence_exits_three_with_history() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &["solve", "--out", "s"],
        "theta = pi/2\nspacing = 1/16\nmax_newton_iterations = 1\ncontinuation_steps = 1\nmin_phase_step = 1\n",
    );
    assert_eq!(code(&o), 3);
    assert!(read(dir.path().join("s/history.csv")).starts_with("homotopy,"));
    assert!(!dir.path().join("s/solution.csv").exists());
}

#[test]
fn probe_missing_solution_exits_four() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["probe", "--out", "p"], "solution = missing.csv\n")), 4);
    assert_eq!(code(&run(dir.path(), &["ot", "--out", "p"], "solution = missing.csv\n")), 4);
}

#[test]
fn probe_reads_a_solved_patch() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["solve", "--out", "s"], "theta = pi/2\nspacing = 1/16\n")), 0);
    let o = run(dir.path(), &["probe", "--out", "p"], "solution = s/solution.csv\n");
    assert_eq!(code(&o), 0);
    let sup = column(&read(dir.path().join("p/probe.csv")), "sup_kappa");
    assert!((sup[0] - 1.0).abs() < 1e-2, "{sup:?}");
}

#[test]
fn probe_family_ratio_columns_are_bounded() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &["probe", "--out", "p"],
        "amplitudes = 0.02, 0.06, 0.1\nspacings = 1/16, 1/32\n",
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = read(dir.path().join("p/probe.csv"));
    assert_eq!(csv.lines().count(), 1 + 6);
    let ratio = column(&csv, "gradient_ratio");
    assert!(ratio.iter().all(|r| r.is_finite() && *r > 0.0 && *r < 10.0));
    let drift = column(&read(dir.path().join("p/probe_drift.csv")), "sup_kappa_drift");
    assert!(drift.iter().all(|d| *d < 0.1));
}

#[test]
fn ot_on_cap_and_mtw_scan() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["ot", "--out", "o"], "theta = pi/3\nspacing = 1/32\nmtw_trials = 200\n");
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = read(dir.path().join("o/ot_map.csv"));
    let x1 = column(&csv, "x1");
    let x2 = column(&csv, "x2");
    let res = column(&csv, "measure_residual");
    let mut inner = res
        .iter()
        .zip(x1.iter().zip(&x2))
        .filter(|(r, (a, b))| !r.is_nan() && a.abs() <= 0.35 && b.abs() <= 0.35);
    assert!(inner.clone().count() > 100);
    assert!(inner.all(|(r, _)| r.abs() < 5e-2));
    let mtw = column(&read(dir.path().join("o/mtw.csv")), "max_mtw");
    assert_eq!(mtw.len(), 5);
    assert!(mtw.iter().all(|m| *m < 0.0));
    assert_eq!(read(dir.path().join("o/ot_assignment.csv")).lines().count(), 101);
}

#[test]
fn ot_rejects_obtuse_phase() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["ot", "--out", "o"], "theta = 2*pi/3\nspacing = 1/16\n")), 2);
}
