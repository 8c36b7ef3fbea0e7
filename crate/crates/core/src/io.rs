//! Text formats: diagnostics CSV, sweep CSV and the artifact manifest.
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting,
//! which is locale-independent. Every file is header-first and every line
//! is newline-terminated.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::experiments::SweepResult;

pub const DIAGNOSTICS_HEADER: &str =
    "t,mass,u_sup,v_sup,grad_v_l2sq,y_p,lyapunov_F,entropy_E,u_dist_l2,v_lp,cum_dissipation";

/// Shortest round-trip decimal; switches to exponent notation for very
/// large or small magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        num(r.t),
        num(r.mass),
        num(r.u_sup),
        num(r.v_sup),
        num(r.grad_v_l2sq),
        num(r.y_p),
        opt(r.lyapunov_f),
        num(r.entropy_e),
        opt(r.u_dist_l2),
        num(r.v_lp),
        num(r.cum_dissipation)
    )
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&diagnostics_row(r));
        out.push('\n');
    }
    out
}

pub fn sweep_header(result: &SweepResult) -> String {
    let mut h = String::from(
        "run_id,chi,kappa,mu,eps,chi_v0_sup,threshold,threshold_p,condition_satisfied,termination,max_u_sup,final_t,final_mass,final_u_sup,final_v_sup,final_u_dist_l2",
    );
    if let Some(row) = result.rows.first() {
        for (name, _) in &row.extras {
            write!(h, ",{name}").unwrap();
        }
    }
    h
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = sweep_header(result);
    out.push('\n');
    for row in &result.rows {
        let f = &row.final_record;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.run_id,
            num(row.chi),
            num(row.kappa),
            num(row.mu),
            num(row.eps),
            num(row.chi_v0_sup),
            opt(row.condition.map(|c| c.threshold)),
            opt(row.condition.map(|c| c.p)),
            row.condition.map(|c| c.satisfied.to_string()).unwrap_or_default(),
            row.termination,
            num(row.max_u_sup),
            num(f.t),
            num(f.mass),
            num(f.u_sup),
            num(f.v_sup),
            opt(f.u_dist_l2),
        )
        .unwrap();
        for (_, v) in &row.extras {
            write!(out, ",{}", num(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `sweep.csv`, one diagnostics CSV per run, optional final
/// snapshots and `manifest.txt` (artifact list preceded by `echo`, the
/// experiment description). Returns the written paths.
pub fn write_sweep(result: &SweepResult, dir: &Path, echo: &str) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: &[u8]| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    put("sweep.csv".into(), sweep_csv(result).as_bytes())?;
    for run in &result.runs {
        put(format!("run_{:03}_diagnostics.csv", run.run_id), diagnostics_csv(&run.records).as_bytes())?;
        if let Some((u, v)) = &run.final_fields {
            for (tag, field) in [("u", u), ("v", v)] {
                let mut buf = Vec::new();
                field
                    .write_snapshot(&mut buf)
                    .map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
                put(format!("run_{:03}_{tag}_final.txt", run.run_id), &buf)?;
            }
        }
    }
    if !result.tables.is_empty() {
        for table in &result.tables {
            put(table.name.clone(), table.to_csv().as_bytes())?;
        }
    }

    let mut manifest = String::new();
    writeln!(manifest, "# scenario: {}", result.scenario.as_str()).unwrap();
    for line in echo.lines() {
        writeln!(manifest, "# {line}").unwrap();
    }
    for a in &result.assertions {
        writeln!(manifest, "# assertion {}: {} ({})", a.name, if a.passed { "pass" } else { "FAIL" }, a.detail).unwrap();
    }
    for p in &written {
        writeln!(manifest, "{}", p.file_name().unwrap().to_string_lossy()).unwrap();
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 1.0 / 3.0,
            u_sup: 2.0,
            v_sup: 0.1,
            grad_v_l2sq: 1e-300,
            y_p: 4.0,
            lyapunov_f: None,
            entropy_e: -0.5,
            u_dist_l2: Some(0.25),
            v_lp: 1e20,
            cum_dissipation: 0.0,
        }
    }

    #[test]
    fn diagnostics_csv_layout() {
        let csv = diagnostics_csv(&[record(0.0), record(0.5)]);
        let lines: Vec<&str> = csv.split_inclusive('\n').collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.ends_with('\n')));
        assert_eq!(lines[0].trim_end(), DIAGNOSTICS_HEADER);
        assert_eq!(lines[1].trim_end(), "0.0,0.3333333333333333,2.0,0.1,1e-300,4.0,,-0.5,0.25,1e20,0.0");
        for line in &lines[1..] {
            assert_eq!(line.trim_end().split(',').count(), 11);
        }
    }

    #[test]
    fn csv_numbers_round_trip() {
        let csv = diagnostics_row(&record(0.1 + 0.2));
        let t: f64 = csv.split(',').next().unwrap().parse().unwrap();
        assert_eq!(t, 0.1 + 0.2);
        let mass: f64 = csv.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(mass, 1.0 / 3.0);
    }
}
