//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [grid]
//! dim = 2
//! cells = 64, 64
//! lengths = 1, 1
//!
//! [model]
//! chi = 1
//! kappa = 1
//! mu = 1
//! ```
//!
//! Lists are separated by commas or whitespace. Every error names the file,
//! the line (when the key is present) and the `[section].key`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chemotaxis_core::diagnostics::DiagnosticsConfig;
use chemotaxis_core::experiments::{ExperimentSpec, Scenario, SweepAxes};
use chemotaxis_core::expr::Expr;
use chemotaxis_core::grid::{GridSpec, TaxisScheme};
use chemotaxis_core::model::{InitialData, ModelError, ModelParams};
use chemotaxis_core::stepper::{ConfigError as SolverConfigError, PositivityPolicy, Sampling, SolverConfig};

const SCHEMA: &[(&str, &[&str])] = &[
    ("grid", &["dim", "cells", "lengths"]),
    ("model", &["chi", "kappa", "mu", "eps"]),
    ("init", &["u0_expr", "v0_expr"]),
    (
        "solver",
        &[
            "dt",
            "t_end",
            "adaptive",
            "safety",
            "positivity_policy",
            "positivity_floor",
            "taxis_scheme",
            "blowup_threshold",
            "steady_tol",
            "linsolve_tol",
            "linsolve_maxiter",
            "max_wall_time",
        ],
    ),
    ("output", &["sample_every", "directory", "snapshots"]),
    ("diagnostics", &["p", "q", "v_floor"]),
    ("experiment", &["scenario", "tolerance", "dissipation_tol", "dt_factor"]),
    ("sweep", &["mu", "mu_factor", "chi_v0", "eps", "cells"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    /// `[section].key` when the error concerns one entry.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": {key}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Untyped view of a config file.
#[derive(Debug, Clone)]
pub struct RawConfig {
    file: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str, file: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        let at = |line: usize, key: Option<String>, message: String| ConfigError {
            file: file.to_string(),
            line: Some(line),
            key,
            message,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, None, format!("malformed section header `{content}`")))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(at(line, None, format!("unknown section [{name}]")));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| at(line, None, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .as_ref()
                .ok_or_else(|| at(line, None, format!("`{key}` appears before any section header")))?;
            let qualified = format!("[{section}].{key}");
            let known = SCHEMA.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !known.contains(&key) {
                return Err(at(line, Some(qualified), "unknown key".into()));
            }
            if value.is_empty() {
                return Err(at(line, Some(qualified), "empty value".into()));
            }
            let entries = sections.get_mut(section).expect("section registered");
            if let Some(prev) = entries.get(key) {
                return Err(at(line, Some(qualified), format!("duplicate key (first set on line {})", prev.line)));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(RawConfig {
            file: file.to_string(),
            sections,
        })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Error attached to `[section].key`, with its line if present.
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line: self.entry(section, key).map(|e| e.line),
            key: Some(format!("[{section}].{key}")),
            message: message.into(),
        }
    }

    fn general(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line: None,
            key: None,
            message: message.into(),
        }
    }

    pub fn string(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    fn required_string(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.string(section, key).ok_or_else(|| self.error(section, key, "missing required key"))
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.string(section, key)
            .map(|v| parse_f64(v).map_err(|m| self.error(section, key, m)))
            .transpose()
    }

    fn required_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.f64(section, key)?.ok_or_else(|| self.error(section, key, "missing required key"))
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.string(section, key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| self.error(section, key, format!("expected a nonnegative integer, got `{v}`")))
            })
            .transpose()
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        self.string(section, key)
            .map(|v| match v {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(self.error(section, key, format!("expected true or false, got `{other}`"))),
            })
            .transpose()
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self.string(section, key) {
            None => Ok(Vec::new()),
            Some(v) => split_list(v)
                .map(|item| parse_f64(item).map_err(|m| self.error(section, key, m)))
                .collect(),
        }
    }

    fn usize_list(&self, section: &str, key: &str) -> Result<Vec<usize>, ConfigError> {
        match self.string(section, key) {
            None => Ok(Vec::new()),
            Some(v) => split_list(v)
                .map(|item| {
                    item.parse::<usize>()
                        .map_err(|_| self.error(section, key, format!("expected a nonnegative integer, got `{item}`")))
                })
                .collect(),
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn parse_f64(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(_) => Err(format!("expected a finite number, got `{v}`")),
        Err(_) => Err(format!("expected a number, got `{v}`")),
    }
}

/// Everything needed by `run`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub init: InitialData,
    pub u0: Expr,
    pub v0: Expr,
    pub solver: SolverConfig,
    pub sampling: Sampling,
    pub output_dir: PathBuf,
    pub snapshots: bool,
}

fn grid(raw: &RawConfig) -> Result<GridSpec, ConfigError> {
    let dim = raw
        .usize("grid", "dim")?
        .ok_or_else(|| raw.error("grid", "dim", "missing required key"))?;
    if !(1..=2).contains(&dim) {
        return Err(raw.error("grid", "dim", format!("must be 1 or 2, got {dim}")));
    }
    let cells = raw.usize_list("grid", "cells")?;
    if cells.len() != dim {
        return Err(raw.error("grid", "cells", format!("expected {dim} value(s), got {}", cells.len())));
    }
    let mut lengths = raw.f64_list("grid", "lengths")?;
    if lengths.is_empty() {
        lengths = vec![1.0; dim];
    }
    if lengths.len() != dim {
        return Err(raw.error("grid", "lengths", format!("expected {dim} value(s), got {}", lengths.len())));
    }
    if let Some(l) = lengths.iter().find(|l| !(**l > 0.0)) {
        return Err(raw.error("grid", "lengths", format!("must be positive, got {l}")));
    }
    GridSpec::new(&cells, &lengths).map_err(|e| raw.error("grid", "cells", e.to_string()))
}

fn model(raw: &RawConfig, allow_relaxed: bool) -> Result<ModelParams, ConfigError> {
    let chi = raw.required_f64("model", "chi")?;
    let kappa = raw.required_f64("model", "kappa")?;
    let mu = raw.required_f64("model", "mu")?;
    let eps = raw.f64("model", "eps")?.unwrap_or(0.0);
    let built = if allow_relaxed {
        ModelParams::relaxed(chi, kappa, mu, eps)
    } else {
        ModelParams::new(chi, kappa, mu, eps)
    };
    built.map_err(|e| match e {
        ModelError::InvalidParameter { name, value, reason } => {
            raw.error("model", name, format!("{reason} (got {value})"))
        }
        other => raw.general(other.to_string()),
    })
}

fn expressions(raw: &RawConfig) -> Result<(Expr, Expr), ConfigError> {
    let parse = |key: &str| {
        let text = raw.required_string("init", key)?;
        Expr::parse(text).map_err(|e| raw.error("init", key, format!("column {}: {}", e.column, e.message)))
    };
    Ok((parse("u0_expr")?, parse("v0_expr")?))
}

fn initial_data(raw: &RawConfig, grid: GridSpec, u0: &Expr, v0: &Expr) -> Result<InitialData, ConfigError> {
    InitialData::new(u0.sample(grid), v0.sample(grid)).map_err(|e| match e {
        ModelError::NonPositiveInitial { field, cell, value } => raw.error(
            "init",
            if field.starts_with('u') { "u0_expr" } else { "v0_expr" },
            format!("must be strictly positive at every cell center; cell {cell} gives {value}"),
        ),
        other => raw.general(other.to_string()),
    })
}

fn solver(raw: &RawConfig) -> Result<SolverConfig, ConfigError> {
    let mut c = SolverConfig::default();
    let s = "solver";
    if let Some(v) = raw.f64(s, "dt")? {
        c.dt = v;
    }
    if let Some(v) = raw.f64(s, "t_end")? {
        c.t_end = v;
    }
    if let Some(v) = raw.bool(s, "adaptive")? {
        c.adaptive = v;
    }
    if let Some(v) = raw.f64(s, "safety")? {
        c.safety = v;
    }
    let floor = raw.f64(s, "positivity_floor")?;
    c.positivity = match raw.string(s, "positivity_policy") {
        None | Some("clamp") => PositivityPolicy::Clamp {
            floor: floor.unwrap_or(0.0),
        },
        Some("reject") => {
            if floor.is_some() {
                return Err(raw.error(s, "positivity_floor", "only meaningful with positivity_policy = clamp"));
            }
            PositivityPolicy::Reject
        }
        Some(other) => {
            return Err(raw.error(s, "positivity_policy", format!("expected clamp or reject, got `{other}`")))
        }
    };
    c.taxis_scheme = match raw.string(s, "taxis_scheme") {
        None | Some("upwind") => TaxisScheme::Upwind,
        Some("central") => TaxisScheme::Central,
        Some(other) => return Err(raw.error(s, "taxis_scheme", format!("expected upwind or central, got `{other}`"))),
    };
    if let Some(v) = raw.f64(s, "blowup_threshold")? {
        c.blowup_threshold = v;
    }
    if let Some(v) = raw.f64(s, "steady_tol")? {
        c.steady_tol = v;
    }
    if let Some(v) = raw.f64(s, "linsolve_tol")? {
        c.linsolve_tol = v;
    }
    if let Some(v) = raw.usize(s, "linsolve_maxiter")? {
        c.linsolve_maxiter = v;
    }
    if let Some(v) = raw.f64(s, "max_wall_time")? {
        if !(v > 0.0) {
            return Err(raw.error(s, "max_wall_time", format!("must be positive seconds, got {v}")));
        }
        c.max_wall_time = Some(Duration::from_secs_f64(v));
    }
    c.validate().map_err(|e| match e {
        SolverConfigError::Invalid { field, value, reason } => raw.error(s, field, format!("{reason} (got {value})")),
    })?;
    Ok(c)
}

fn sampling(raw: &RawConfig) -> Result<Sampling, ConfigError> {
    let mut d = DiagnosticsConfig::default();
    if let Some(v) = raw.f64("diagnostics", "p")? {
        d.p = v;
    }
    if let Some(v) = raw.f64("diagnostics", "q")? {
        d.q = v;
    }
    if let Some(v) = raw.f64("diagnostics", "v_floor")? {
        d.v_floor = v;
    }
    if d.validate().is_err() {
        let (key, value, rule) = if !(d.p >= 1.0) {
            ("p", d.p, "must be >= 1")
        } else if !(d.q >= 1.0) {
            ("q", d.q, "must be >= 1")
        } else {
            ("v_floor", d.v_floor, "must be positive")
        };
        return Err(raw.error("diagnostics", key, format!("{rule} (got {value})")));
    }
    let every = raw.f64("output", "sample_every")?.unwrap_or(0.1);
    if !(every > 0.0) {
        return Err(raw.error("output", "sample_every", format!("must be positive (got {every})")));
    }
    Ok(Sampling { every, diagnostics: d })
}

fn output(raw: &RawConfig) -> Result<(PathBuf, bool), ConfigError> {
    let dir = PathBuf::from(raw.string("output", "directory").unwrap_or("out"));
    let snapshots = raw.bool("output", "snapshots")?.unwrap_or(false);
    Ok((dir, snapshots))
}

pub fn parse_run(text: &str, file: &str) -> Result<RunConfig, ConfigError> {
    let raw = RawConfig::parse(text, file)?;
    let grid = grid(&raw)?;
    let params = model(&raw, false)?;
    let (u0, v0) = expressions(&raw)?;
    let init = initial_data(&raw, grid, &u0, &v0)?;
    let solver = solver(&raw)?;
    let sampling = sampling(&raw)?;
    let (output_dir, snapshots) = output(&raw)?;
    Ok(RunConfig {
        grid,
        params,
        init,
        u0,
        v0,
        solver,
        sampling,
        output_dir,
        snapshots,
    })
}

/// Experiment specs add `[experiment]` and `[sweep]`. The manufactured
/// solution scenario also admits `χ = 0` or `μ = 0`.
pub fn parse_experiment(text: &str, file: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw = RawConfig::parse(text, file)?;
    let scenario: Scenario = raw
        .required_string("experiment", "scenario")?
        .parse()
        .map_err(|m: String| raw.error("experiment", "scenario", m))?;
    let grid = grid(&raw)?;
    let params = model(&raw, scenario == Scenario::Mms)?;
    let (u0, v0) = if scenario == Scenario::Mms && !raw.has_section("init") {
        (Expr::parse("1").expect("literal"), Expr::parse("1").expect("literal"))
    } else {
        expressions(&raw)?
    };
    if scenario != Scenario::Mms {
        initial_data(&raw, grid, &u0, &v0)?;
    }
    let mut spec = ExperimentSpec::new(scenario, grid, params, u0, v0);
    spec.solver = solver(&raw)?;
    spec.sampling = sampling(&raw)?;
    let (dir, snapshots) = output(&raw)?;
    spec.output_dir = dir;
    spec.snapshots = snapshots;
    if let Some(v) = raw.f64("experiment", "tolerance")? {
        if !(v > 0.0) {
            return Err(raw.error("experiment", "tolerance", format!("must be positive (got {v})")));
        }
        spec.tolerance = v;
    }
    if let Some(v) = raw.f64("experiment", "dissipation_tol")? {
        if !(v >= 0.0) {
            return Err(raw.error("experiment", "dissipation_tol", format!("must be nonnegative (got {v})")));
        }
        spec.dissipation_tol = v;
    }
    if let Some(v) = raw.f64("experiment", "dt_factor")? {
        if !(v > 0.0) {
            return Err(raw.error("experiment", "dt_factor", format!("must be positive (got {v})")));
        }
        spec.dt_factor = v;
    }
    spec.axes = SweepAxes {
        mu: raw.f64_list("sweep", "mu")?,
        mu_factor: raw.f64_list("sweep", "mu_factor")?,
        chi_v0: raw.f64_list("sweep", "chi_v0")?,
        eps: raw.f64_list("sweep", "eps")?,
        cells: raw.usize_list("sweep", "cells")?,
    };
    for key in ["mu", "mu_factor"] {
        if let Some(v) = raw.f64_list("sweep", key)?.iter().find(|v| !(**v > 0.0)) {
            return Err(raw.error("sweep", key, format!("values must be positive (got {v})")));
        }
    }
    if let Some(v) = spec.axes.chi_v0.iter().find(|v| !(**v >= 0.0)) {
        return Err(raw.error("sweep", "chi_v0", format!("values must be nonnegative (got {v})")));
    }
    if let Some(v) = spec.axes.eps.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
        return Err(raw.error("sweep", "eps", format!("values must lie in [0, 1) (got {v})")));
    }
    if let Some(v) = spec.axes.cells.iter().find(|v| **v < 2) {
        return Err(raw.error("sweep", "cells", format!("values must be at least 2 (got {v})")));
    }
    Ok(spec)
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: path.display().to_string(),
        line: None,
        key: None,
        message: format!("cannot read: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[grid]
dim = 1
cells = 16
[model]
chi = 1
kappa = 1
mu = 1
[init]
u0_expr = 1 + 0.5*cos(pi*x)
v0_expr = 1
[solver]
dt = 0.01
t_end = 0.1
";

    fn err(text: &str) -> ConfigError {
        parse_run(text, "c.ini").unwrap_err()
    }

    #[test]
    fn parses_defaults() {
        let cfg = parse_run(BASE, "c.ini").unwrap();
        assert_eq!(cfg.grid.cells()[0], 16);
        assert_eq!(cfg.grid.lengths()[0], 1.0);
        assert_eq!(cfg.params.eps(), 0.0);
        assert_eq!(cfg.solver.dt, 0.01);
        assert_eq!(cfg.solver.taxis_scheme, TaxisScheme::Upwind);
        assert!(!cfg.snapshots);
    }

    #[test]
    fn negative_mu_names_the_key_and_line() {
        let e = err(&BASE.replace("mu = 1", "mu = -1"));
        assert_eq!(e.key.as_deref(), Some("[model].mu"));
        assert_eq!(e.line, Some(7));
        assert!(e.to_string().starts_with("c.ini:7: [model].mu:"), "{e}");
    }

    #[test]
    fn structural_errors() {
        assert_eq!(err(&format!("{BASE}[bogus]\n")).line, Some(14));
        assert_eq!(err(&format!("{BASE}colour = red\n")).key.as_deref(), Some("[solver].colour"));
        assert!(err(&format!("{BASE}dt = 0.02\n")).message.contains("duplicate"));
        assert!(err(&format!("x = 1\n{BASE}")).message.contains("before any section"));
        assert!(err(&BASE.replace("dt = 0.01", "dt 0.01")).message.contains("key = value"));
    }

    #[test]
    fn missing_and_malformed_values() {
        let e = err(&BASE.replace("chi = 1\n", ""));
        assert_eq!(e.key.as_deref(), Some("[model].chi"));
        assert_eq!(e.line, None);
        assert_eq!(err(&BASE.replace("cells = 16", "cells = 16, 16")).key.as_deref(), Some("[grid].cells"));
        assert_eq!(err(&BASE.replace("dt = 0.01", "dt = fast")).key.as_deref(), Some("[solver].dt"));
        assert_eq!(err(&BASE.replace("dt = 0.01", "dt = 1")).key.as_deref(), Some("[solver].dt"));
        assert_eq!(err(&BASE.replace("v0_expr = 1", "v0_expr = cos(pi*x)")).key.as_deref(), Some("[init].v0_expr"));
        assert_eq!(err(&BASE.replace("v0_expr = 1", "v0_expr = 1 +")).key.as_deref(), Some("[init].v0_expr"));
        assert_eq!(err(&format!("{BASE}[diagnostics]\nq = 0.5\n")).key.as_deref(), Some("[diagnostics].q"));
    }

    #[test]
    fn experiment_sections() {
        let text = format!("{BASE}[experiment]\nscenario = boundedness\n[sweep]\nchi_v0 = 0.25, 0.5 1\nmu_factor = 1.1\n");
        let spec = parse_experiment(&text, "e.ini").unwrap();
        assert_eq!(spec.scenario, Scenario::Boundedness);
        assert_eq!(spec.axes.chi_v0, vec![0.25, 0.5, 1.0]);
        assert_eq!(spec.axes.mu_factor, vec![1.1]);
        let bad = parse_experiment(&text.replace("boundedness", "chaos"), "e.ini").unwrap_err();
        assert_eq!(bad.key.as_deref(), Some("[experiment].scenario"));
    }

    #[test]
    fn mms_admits_relaxed_parameters() {
        let text = format!("{}[experiment]\nscenario = mms\n", BASE.replace("chi = 1", "chi = 0"));
        assert!(parse_experiment(&text, "e.ini").unwrap().params.is_relaxed());
        assert!(parse_run(&BASE.replace("chi = 1", "chi = 0"), "c.ini").is_err());
    }
}
