//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chemotaxis_core::diagnostics::{
    check_hessian_inequality, check_interpolation_inequality, weak_residual, BumpTestFunction, DiagnosticsRecord,
    SpatialProfile, TrajectorySample,
};
use chemotaxis_core::experiments::run_experiment;
use chemotaxis_core::grid::{self, Field};
use chemotaxis_core::io::{diagnostics_csv, num, write_sweep};
use chemotaxis_core::model::{self, ModelParams};
use chemotaxis_core::stepper::{run_observed, Observer, SimState, Termination};

use crate::config::{parse_experiment, parse_run, read_file, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION_UNSATISFIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;
pub const EXIT_BLOW_UP: i32 = 4;
pub const EXIT_ASSERTION: i32 = 5;

fn input_error(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> i32 {
    eprintln!("error: cannot write {}: {e}", path.display());
    EXIT_INPUT
}

#[derive(Default)]
struct Collector {
    samples: Vec<TrajectorySample>,
}

impl Observer for Collector {
    fn on_sample(&mut self, state: &SimState, _record: &DiagnosticsRecord) {
        self.samples.push(TrajectorySample {
            t: state.t,
            u: state.u.clone(),
            v: state.v.clone(),
        });
    }
}

pub const SNAPSHOT_INDEX: &str = "snapshots.csv";
pub const CONFIG_COPY: &str = "config.ini";

fn write_snapshot(path: &Path, field: &Field) -> std::io::Result<()> {
    let mut buf = Vec::new();
    field
        .write_snapshot(&mut buf)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
    fs::write(path, buf)
}

/// Writes `snapshots/{u,v}_NNNNN.txt` and an index `snapshots.csv`
/// (`index,t,u_file,v_file`, paths relative to `dir`).
fn write_snapshots(dir: &Path, samples: &[TrajectorySample]) -> std::io::Result<()> {
    let sub = dir.join("snapshots");
    fs::create_dir_all(&sub)?;
    let mut index = String::from("index,t,u_file,v_file\n");
    for (k, s) in samples.iter().enumerate() {
        let (uf, vf) = (format!("snapshots/u_{k:05}.txt"), format!("snapshots/v_{k:05}.txt"));
        write_snapshot(&dir.join(&uf), &s.u)?;
        write_snapshot(&dir.join(&vf), &s.v)?;
        writeln!(index, "{k},{},{uf},{vf}", num(s.t)).unwrap();
    }
    fs::write(dir.join(SNAPSHOT_INDEX), index)
}

pub fn cmd_run(config_path: &Path, output: Option<&Path>) -> i32 {
    let text = match read_file(config_path) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let cfg = match parse_run(&text, &config_path.display().to_string()) {
        Ok(c) => c,
        Err(e) => return input_error(e),
    };
    let dir = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());

    let mut collector = Collector::default();
    let observer: &mut dyn Observer = if cfg.snapshots { &mut collector } else { &mut () };
    let result = run_observed(&cfg.init, &cfg.params, &cfg.solver, &cfg.sampling, None, observer);

    if let Err(e) = fs::create_dir_all(&dir) {
        return io_error(&dir, e);
    }
    let csv_path = dir.join("diagnostics.csv");
    if let Err(e) = fs::write(&csv_path, diagnostics_csv(&result.records)) {
        return io_error(&csv_path, e);
    }
    if let Err(e) = fs::write(dir.join(CONFIG_COPY), &text) {
        return io_error(&dir.join(CONFIG_COPY), e);
    }
    if cfg.snapshots {
        if let Err(e) = write_snapshots(&dir, &collector.samples) {
            return io_error(&dir, e);
        }
    }

    let last = result.records.last().expect("initial record");
    println!("termination: {}", result.termination);
    println!("t: {}", last.t);
    println!(
        "steps: {} accepted, {} rejected, {} clamped cells",
        result.accepted_steps, result.rejected_steps, result.clamped_cells
    );
    println!("mass: {}", last.mass);
    println!("u_sup: {}", last.u_sup);
    println!("v_sup: {}", last.v_sup);
    println!("diagnostics: {}", csv_path.display());
    if let Some(f) = &result.failure {
        eprintln!("solver failure: {f}");
    }
    match result.termination {
        Termination::ReachedTEnd | Termination::SteadyState => EXIT_OK,
        Termination::BlowUp => EXIT_BLOW_UP,
        Termination::SolverFailure | Termination::TimedOut => EXIT_SOLVER_FAILURE,
    }
}

pub struct ConditionArgs {
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    pub v0_sup: f64,
    pub dim: u32,
    pub p: Option<f64>,
}

pub fn cmd_check_condition(args: &ConditionArgs) -> i32 {
    let params = match ModelParams::new(args.chi, args.kappa, args.mu, 0.0) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    if args.dim == 0 {
        return input_error("dimension must be at least 1");
    }
    let report = match args.p {
        Some(p) => model::check_mu_condition(&params, args.v0_sup, p, args.dim),
        None => model::least_threshold(&params, args.v0_sup, args.dim),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => return input_error(e),
    };
    let s = args.chi * args.v0_sup;
    let (k1, k2) = model::k_constants(report.p, args.dim).expect("p validated by the threshold");
    let theorem = model::theorem_variant_threshold(s, args.dim).expect("dimension validated");
    println!("chi_v0_sup: {s}");
    println!("p: {}{}", report.p, if args.p.is_some() { "" } else { " (minimizing)" });
    println!("k1: {k1}");
    println!("k2: {k2}");
    println!("threshold: {}", report.threshold);
    println!("theorem_threshold: {theorem}");
    println!("mu: {}", args.mu);
    println!("verdict: {}", if report.satisfied { "satisfied" } else { "not satisfied" });
    if report.satisfied {
        EXIT_OK
    } else {
        EXIT_CONDITION_UNSATISFIED
    }
}

pub fn cmd_experiment(spec_path: &Path, output: Option<&Path>) -> i32 {
    let text = match read_file(spec_path) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let spec = match parse_experiment(&text, &spec_path.display().to_string()) {
        Ok(s) => s,
        Err(e) => return input_error(e),
    };
    let result = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => return input_error(e),
    };
    let dir: PathBuf = output.map(Path::to_path_buf).unwrap_or_else(|| spec.output_dir.clone());
    if let Err(e) = write_sweep(&result, &dir, &text) {
        return io_error(&dir, e);
    }
    println!("scenario: {}", result.scenario.as_str());
    println!("runs: {}", result.rows.len());
    for table in &result.tables {
        println!("{}:", table.name);
        print!("{}", table.to_csv());
    }
    for a in &result.assertions {
        println!("{} {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    println!("output: {}", dir.display());
    let failed: Vec<_> = result.failed_assertions().collect();
    if failed.is_empty() {
        EXIT_OK
    } else {
        for a in failed {
            eprintln!("violated: {} ({})", a.name, a.detail);
        }
        EXIT_ASSERTION
    }
}

fn load_snapshot(path: &Path) -> Result<Field, String> {
    let file = fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    Field::read_snapshot(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn cmd_diagnose_hessian(files: &[PathBuf]) -> i32 {
    let mut worst: f64 = 0.0;
    let mut failed = false;
    for path in files {
        let c = match load_snapshot(path) {
            Ok(c) => c,
            Err(e) => return input_error(e),
        };
        let n = c.grid().dim() as u32;
        let report = check_hessian_inequality(&c, n);
        // rounding slack relative to the largest N|D²c|²
        let scale = grid::hessian_frobenius_sq(&c).values().iter().fold(0.0f64, |m, &h| m.max(n as f64 * h));
        let ok = report.max_violation <= 1e-12 * scale;
        failed |= !ok;
        worst = worst.max(report.max_violation);
        println!("{}: max_violation {}", path.display(), report.max_violation);
    }
    println!("max_violation: {worst}");
    if failed {
        eprintln!("violated: |Δc|² <= N|D²c|²");
        EXIT_ASSERTION
    } else {
        EXIT_OK
    }
}

pub fn cmd_diagnose_interpolation(files: &[PathBuf], q: f64, min_ratio: f64) -> i32 {
    let mut failed = false;
    for path in files {
        let c = match load_snapshot(path) {
            Ok(c) => c,
            Err(e) => return input_error(e),
        };
        let report = match check_interpolation_inequality(&c, q, c.grid().dim() as u32) {
            Ok(r) => r,
            Err(e) => return input_error(e),
        };
        match report.ratio {
            Some(r) => {
                failed |= r < min_ratio;
                println!("{}: lhs {} rhs {} ratio {r}", path.display(), report.lhs, report.rhs);
            }
            None => println!("{}: lhs {} rhs {} ratio n/a (degenerate)", path.display(), report.lhs, report.rhs),
        }
    }
    if failed {
        eprintln!("violated: interpolation ratio below {min_ratio}");
        EXIT_ASSERTION
    } else {
        EXIT_OK
    }
}

fn load_trajectory(run_dir: &Path) -> Result<(ModelParams, Vec<TrajectorySample>), String> {
    let cfg_path = run_dir.join(CONFIG_COPY);
    let text = read_file(&cfg_path).map_err(|e: ConfigError| e.to_string())?;
    let cfg = parse_run(&text, &cfg_path.display().to_string()).map_err(|e| e.to_string())?;
    let index_path = run_dir.join(SNAPSHOT_INDEX);
    let index = fs::read_to_string(&index_path).map_err(|e| format!("cannot read {}: {e}", index_path.display()))?;
    let mut samples = Vec::new();
    for (k, line) in index.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || format!("{}:{}: expected `index,t,u_file,v_file`", index_path.display(), k + 1);
        if cols.len() != 4 {
            return Err(bad());
        }
        let t: f64 = cols[1].parse().map_err(|_| bad())?;
        samples.push(TrajectorySample {
            t,
            u: load_snapshot(&run_dir.join(cols[2]))?,
            v: load_snapshot(&run_dir.join(cols[3]))?,
        });
    }
    Ok((cfg.params, samples))
}

pub fn cmd_diagnose_weak(run_dir: &Path, profile: SpatialProfile, horizon: Option<f64>) -> i32 {
    let (params, samples) = match load_trajectory(run_dir) {
        Ok(x) => x,
        Err(e) => return input_error(e),
    };
    let Some(last) = samples.last() else {
        return input_error(format!("{}: no snapshots", run_dir.display()));
    };
    let horizon = horizon.unwrap_or(last.t);
    let lengths = last.u.grid().lengths();
    let phi = BumpTestFunction::new(profile, horizon, [lengths[0], lengths.get(1).copied().unwrap_or(1.0)]);
    match weak_residual(&samples, &params, &phi) {
        Ok(r) => {
            println!("samples: {}", samples.len());
            println!("horizon: {horizon}");
            println!("res_u: {}", r.res_u);
            println!("res_v: {}", r.res_v);
            EXIT_OK
        }
        Err(e) => input_error(e),
    }
}
