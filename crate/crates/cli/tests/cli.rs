use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str = "t,mass,u_sup,v_sup,grad_v_l2sq,y_p,lyapunov_F,entropy_E,u_dist_l2,v_lp,cum_dissipation";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn config(dir: &Path, model: &str, init: &str, solver: &str, output: &str) -> String {
    format!(
        "[grid]\ndim = 1\ncells = 32\nlengths = 1\n\n[model]\n{model}\n\n[init]\n{init}\n\n[solver]\n{solver}\n\n[output]\ndirectory = {}\n{output}\n",
        dir.join("out").display()
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn csv_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("out/diagnostics.csv")).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn equilibrium_run_writes_constant_u() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "chi = 1\nkappa = 2\nmu = 1",
        "u0_expr = 2\nv0_expr = 0.5",
        "dt = 0.01\nt_end = 0.5",
        "sample_every = 0.1",
    );
    let out = run(&["run", &write(tmp.path(), "c.ini", &cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("termination: reached_t_end"));
    let rows = csv_rows(tmp.path());
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row.len(), 11);
        let u_sup: f64 = row[2].parse().unwrap();
        assert!((u_sup - 2.0).abs() < 1e-12, "{u_sup}");
    }
    assert_eq!(rows[5][0].parse::<f64>().unwrap(), 0.5);
    assert!(tmp.path().join("out/config.ini").exists());
}

#[test]
fn negative_mu_is_an_input_error_naming_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "chi = 1\nkappa = 1\nmu = -1", "u0_expr = 1\nv0_expr = 1", "dt = 0.01", "");
    let out = run(&["run", &write(tmp.path(), "c.ini", &cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("[model].mu"), "{}", stderr(&out));
}

#[test]
fn nonpositive_kappa_leaves_lyapunov_and_distance_cells_empty() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "chi = 1\nkappa = -0.5\nmu = 1",
        "u0_expr = 1 + 0.5*cos(pi*x)\nv0_expr = 1",
        "dt = 0.01\nt_end = 0.1",
        "sample_every = 0.05",
    );
    let out = run(&["run", &write(tmp.path(), "c.ini", &cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for row in csv_rows(tmp.path()) {
        assert_eq!(row[6], "");
        assert_eq!(row[8], "");
        assert!(!row[7].is_empty());
    }
}

#[test]
fn blow_up_and_solver_failure_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let blow = config(
        tmp.path(),
        "chi = 1\nkappa = 1\nmu = 0.01",
        "u0_expr = 2\nv0_expr = 1",
        "dt = 0.01\nt_end = 1\nblowup_threshold = 2.001",
        "",
    );
    let out = run(&["run", &write(tmp.path(), "b.ini", &blow)]);
    assert_eq!(code(&out), 4, "{}", stdout(&out));
    assert!(stdout(&out).contains("blow_up"));

    let fail = config(
        tmp.path(),
        "chi = 1\nkappa = 1\nmu = 1",
        "u0_expr = 1 + 0.5*cos(pi*x)\nv0_expr = 1 + 0.5*cos(pi*x)",
        "dt = 0.01\nt_end = 1\nlinsolve_maxiter = 1\nlinsolve_tol = 1e-14",
        "",
    );
    let out = run(&["run", &write(tmp.path(), "f.ini", &fail)]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    assert!(stdout(&out).contains("solver_failure"));
}

#[test]
fn check_condition_reports_threshold_and_verdict() {
    let out = run(&["check-condition", "--chi", "1", "--kappa", "1", "--mu", "1", "--v0-sup", "0"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("verdict: satisfied"));

    let out = run(&["check-condition", "--chi", "1", "--kappa", "1", "--mu", "1", "--v0-sup", "1", "--dim", "1", "--p", "2"]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    let threshold: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("threshold: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((threshold - 28.565_713_714_171_4).abs() < 1e-9, "{threshold}");

    let out = run(&["check-condition", "--chi", "1", "--kappa", "1", "--mu", "30", "--v0-sup", "1", "--p", "2"]);
    assert_eq!(code(&out), 0);
    let out = run(&["check-condition", "--chi", "1", "--kappa", "1", "--mu", "1", "--v0-sup", "1", "--p", "0.5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn experiment_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let base = config(
        tmp.path(),
        "chi = 1\nkappa = 1\nmu = 1",
        "u0_expr = 1 + 0.5*cos(pi*x)\nv0_expr = 1 + 0.25*cos(pi*x)",
        "dt = 0.01\nt_end = 0.5",
        "sample_every = 0.1",
    );
    let unknown = format!("{base}[experiment]\nscenario = chaos\n");
    let out = run(&["experiment", &write(tmp.path(), "u.ini", &unknown)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("[experiment].scenario"));

    // far too short a horizon to stabilize
    let short = format!("{base}[experiment]\nscenario = stabilization\ntolerance = 1e-3\n");
    let out = run(&["experiment", &write(tmp.path(), "s.ini", &short)]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("u converges"), "{}", stderr(&out));
    let manifest = fs::read_to_string(tmp.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("sweep.csv"));
    assert!(manifest.contains("run_000_diagnostics.csv"));
    assert!(manifest.contains("# scenario = stabilization"));

    let bounded = format!("{base}[experiment]\nscenario = boundedness\n[sweep]\nchi_v0 = 0.5\nmu_factor = 1.1\n");
    let out = run(&["experiment", &write(tmp.path(), "b.ini", &bounded)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sweep = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    assert!(sweep.starts_with("run_id,chi,kappa,mu,eps,chi_v0_sup,threshold"));
    assert_eq!(sweep.lines().count(), 2);
}

#[test]
fn mms_experiment_reports_orders() {
    let tmp = TempDir::new().unwrap();
    let spec = format!(
        "[grid]\ndim = 1\ncells = 16\n[model]\nchi = 1\nkappa = 1\nmu = 1\n[solver]\nt_end = 0.05\n[output]\ndirectory = {}\n[experiment]\nscenario = mms\ndt_factor = 0.5\n[sweep]\ncells = 16, 32\n",
        tmp.path().join("mms").display()
    );
    let out = run(&["experiment", &write(tmp.path(), "m.ini", &spec)]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("mms_orders.csv"));
    assert!(tmp.path().join("mms/mms_orders.csv").exists());
}

#[test]
fn diagnose_on_stored_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "chi = 1\nkappa = 1\nmu = 1",
        "u0_expr = 1 + 0.5*cos(pi*x)\nv0_expr = 1 + 0.25*cos(pi*x)",
        "dt = 0.01\nt_end = 0.5",
        "sample_every = 0.05\nsnapshots = true",
    );
    let out = run(&["run", &write(tmp.path(), "c.ini", &cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let snap = tmp.path().join("out/snapshots/u_00003.txt");
    assert!(snap.exists());

    let out = run(&["diagnose", "hessian", snap.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("max_violation: 0"), "{}", stdout(&out));

    let out = run(&["diagnose", "interpolation", snap.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let run_dir = tmp.path().join("out");
    let out = run(&["diagnose", "weak", run_dir.to_str().unwrap(), "--profile", "cos-x"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("res_u: "));
}

#[test]
fn diagnose_missing_file_is_input_error() {
    let out = run(&["diagnose", "hessian", "/nonexistent/u.txt"]);
    assert_eq!(code(&out), 2);
    let out = run(&["diagnose", "weak", "/nonexistent"]);
    assert_eq!(code(&out), 2);
    let out = run(&["run", "/nonexistent/config.ini"]);
    assert_eq!(code(&out), 2);
}
