//! Scenario drivers: parameter sweeps over the simulator with persisted,
//! order-stable results.
//!
//! Runs within a sweep are independent and execute on the rayon pool;
//! results are collected in run-id order, so a rerun of the same spec yields
//! identical rows.

mod mms;

use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use mms::ManufacturedSolution;

use crate::diagnostics::{dissipation_check, DiagnosticsRecord, TrajectorySample};
use crate::expr::Expr;
use crate::grid::{self, Field, GridSpec, TaxisScheme};
use crate::model::{self, ConditionReport, InitialData, ModelError, ModelParams};
use crate::stepper::{run_observed, Forcing, Observer, RunResult, Sampling, SimState, SolverConfig, StepReport, Termination};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Boundedness,
    Stabilization,
    EpsLimit,
    BlowupProbe,
    Mms,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Boundedness => "boundedness",
            Scenario::Stabilization => "stabilization",
            Scenario::EpsLimit => "eps_limit",
            Scenario::BlowupProbe => "blowup_probe",
            Scenario::Mms => "mms",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "boundedness" => Scenario::Boundedness,
            "stabilization" => Scenario::Stabilization,
            "eps_limit" => Scenario::EpsLimit,
            "blowup_probe" => Scenario::BlowupProbe,
            "mms" => Scenario::Mms,
            other => return Err(format!("unknown scenario `{other}`")),
        })
    }
}

/// Parameter lists swept by a scenario. An empty list means "use the base
/// value" where that makes sense.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepAxes {
    /// Absolute values of μ.
    pub mu: Vec<f64>,
    /// μ as a multiple of the least condition threshold.
    pub mu_factor: Vec<f64>,
    /// Values of χ·‖v₀‖∞; χ is derived from the sampled `v0`.
    pub chi_v0: Vec<f64>,
    pub eps: Vec<f64>,
    /// Cells per axis for refinement studies.
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub grid: GridSpec,
    pub params: ModelParams,
    pub solver: SolverConfig,
    pub sampling: Sampling,
    pub u0: Expr,
    pub v0: Expr,
    pub axes: SweepAxes,
    /// Convergence tolerance for stabilization.
    pub tolerance: f64,
    pub dissipation_tol: f64,
    /// MMS time step is `dt_factor · h²`.
    pub dt_factor: f64,
    pub snapshots: bool,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, grid: GridSpec, params: ModelParams, u0: Expr, v0: Expr) -> Self {
        ExperimentSpec {
            scenario,
            grid,
            params,
            solver: SolverConfig::default(),
            sampling: Sampling::every(0.1),
            u0,
            v0,
            axes: SweepAxes::default(),
            tolerance: 1e-3,
            dissipation_tol: 1e-4,
            dt_factor: 0.5,
            snapshots: false,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Samples the initial expressions on `grid` and checks positivity.
    pub fn initial_data(&self, grid: GridSpec) -> Result<InitialData, ExperimentError> {
        Ok(InitialData::new(self.u0.sample(grid), self.v0.sample(grid))?)
    }
}

/// Outcome of one run in a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub run_id: usize,
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    pub eps: f64,
    pub chi_v0_sup: f64,
    pub condition: Option<ConditionReport>,
    pub termination: Termination,
    pub max_u_sup: f64,
    pub final_record: DiagnosticsRecord,
    /// Scenario-specific columns, identical names across rows.
    pub extras: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub run_id: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub final_fields: Option<(Field, Field)>,
}

/// A small CSV table emitted next to the sweep file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssertionOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        AssertionOutcome {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub scenario: Scenario,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunArtifacts>,
    pub tables: Vec<Table>,
    pub assertions: Vec<AssertionOutcome>,
}

impl SweepResult {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionOutcome> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

/// Tracks per-step and per-record invariants of an unforced run:
/// ‖v‖∞ nonincreasing, the mass bound, the running maximum of ‖u‖∞ and the
/// time after which ‖u − κ/μ‖∞ and ‖v‖∞ stay below a tolerance.
#[derive(Clone, Debug)]
pub struct RunMonitor {
    mass_bound: f64,
    equilibrium: Option<f64>,
    tolerance: f64,
    prev_v_sup: f64,
    pub max_u_sup: f64,
    pub steps: usize,
    pub v_monotone_violations: usize,
    /// Largest relative one-step increase of ‖v‖∞.
    pub worst_v_increase: f64,
    pub records: usize,
    pub mass_violations: usize,
    /// Largest `mass / mass_bound` seen on a record.
    pub worst_mass_ratio: f64,
    pub u_settled_at: Option<f64>,
    pub v_settled_at: Option<f64>,
    samples: Option<Vec<TrajectorySample>>,
}

/// Relative slack on the step-wise ‖v‖∞ monotonicity check.
pub const V_MONOTONE_SLACK: f64 = 1e-12;
/// Relative slack on the mass bound.
pub const MASS_BOUND_SLACK: f64 = 1e-8;

impl RunMonitor {
    pub fn new(init: &InitialData, params: &ModelParams) -> Self {
        let grid = init.u0.grid();
        let mass_bound = model::mass_bound(params, grid.measure(), grid::integrate(&init.u0));
        let mut m = RunMonitor {
            mass_bound,
            equilibrium: params.equilibrium(),
            tolerance: 0.0,
            prev_v_sup: grid::norm_inf(&init.v0),
            max_u_sup: grid::norm_inf(&init.u0),
            steps: 0,
            v_monotone_violations: 0,
            worst_v_increase: 0.0,
            records: 0,
            mass_violations: 0,
            worst_mass_ratio: 0.0,
            u_settled_at: None,
            v_settled_at: None,
            samples: None,
        };
        m.track_tolerance(0.0, &init.u0, &init.v0);
        m
    }

    pub fn with_tolerance(mut self, tolerance: f64, init: &InitialData) -> Self {
        self.tolerance = tolerance;
        self.u_settled_at = None;
        self.v_settled_at = None;
        self.track_tolerance(0.0, &init.u0, &init.v0);
        self
    }

    /// Keeps a copy of the fields at every sample.
    pub fn collecting(mut self) -> Self {
        self.samples = Some(Vec::new());
        self
    }

    pub fn mass_bound(&self) -> f64 {
        self.mass_bound
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        self.samples.as_deref().unwrap_or(&[])
    }

    pub fn take_samples(&mut self) -> Vec<TrajectorySample> {
        self.samples.take().unwrap_or_default()
    }

    fn track_tolerance(&mut self, t: f64, u: &Field, v: &Field) {
        if self.tolerance <= 0.0 {
            return;
        }
        if let Some(eq) = self.equilibrium {
            let dist = u.values().iter().fold(0.0f64, |m, &x| m.max((x - eq).abs()));
            settle(&mut self.u_settled_at, dist < self.tolerance, t);
        }
        settle(&mut self.v_settled_at, grid::norm_inf(v) < self.tolerance, t);
    }
}

fn settle(slot: &mut Option<f64>, below: bool, t: f64) {
    if !below {
        *slot = None;
    } else if slot.is_none() {
        *slot = Some(t);
    }
}

impl Observer for RunMonitor {
    fn on_step(&mut self, state: &SimState, _report: &StepReport) {
        self.steps += 1;
        let v_sup = grid::norm_inf(&state.v);
        let increase = (v_sup - self.prev_v_sup) / self.prev_v_sup.max(f64::MIN_POSITIVE);
        if v_sup > self.prev_v_sup * (1.0 + V_MONOTONE_SLACK) {
            self.v_monotone_violations += 1;
        }
        self.worst_v_increase = self.worst_v_increase.max(increase);
        self.prev_v_sup = v_sup;
        self.max_u_sup = self.max_u_sup.max(grid::norm_inf(&state.u));
        self.track_tolerance(state.t, &state.u, &state.v);
    }

    fn on_sample(&mut self, state: &SimState, record: &DiagnosticsRecord) {
        self.records += 1;
        let ratio = record.mass / self.mass_bound;
        self.worst_mass_ratio = self.worst_mass_ratio.max(ratio);
        if record.mass > self.mass_bound * (1.0 + MASS_BOUND_SLACK) {
            self.mass_violations += 1;
        }
        if let Some(samples) = &mut self.samples {
            samples.push(TrajectorySample {
                t: state.t,
                u: state.u.clone(),
                v: state.v.clone(),
            });
        }
    }
}

struct Planned {
    params: ModelParams,
    chi_v0_sup: f64,
    condition: Option<ConditionReport>,
}

struct Executed {
    result: RunResult,
    monitor: RunMonitor,
}

fn execute(
    init: &InitialData,
    params: &ModelParams,
    solver: &SolverConfig,
    sampling: &Sampling,
    forcing: Option<&dyn Forcing>,
    monitor: RunMonitor,
) -> Executed {
    let mut monitor = monitor;
    let result = run_observed(init, params, solver, sampling, forcing, &mut monitor);
    Executed { result, monitor }
}

fn is_bounded(t: Termination) -> bool {
    matches!(t, Termination::ReachedTEnd | Termination::SteadyState)
}

fn row_for(run_id: usize, plan: &Planned, ex: &Executed, extras: Vec<(String, f64)>) -> SweepRow {
    SweepRow {
        run_id,
        chi: plan.params.chi(),
        kappa: plan.params.kappa(),
        mu: plan.params.mu(),
        eps: plan.params.eps(),
        chi_v0_sup: plan.chi_v0_sup,
        condition: plan.condition,
        termination: ex.result.termination,
        max_u_sup: ex.monitor.max_u_sup,
        final_record: ex.result.records.last().cloned().expect("a run always emits its initial record"),
        extras,
    }
}

fn artifacts(run_id: usize, ex: &Executed, snapshots: bool) -> RunArtifacts {
    RunArtifacts {
        run_id,
        records: ex.result.records.clone(),
        final_fields: snapshots.then(|| (ex.result.final_state.u.clone(), ex.result.final_state.v.clone())),
    }
}

/// Invariant assertions shared by every unforced run.
fn invariant_assertions(run_id: usize, ex: &Executed, out: &mut Vec<AssertionOutcome>) {
    let m = &ex.monitor;
    out.push(AssertionOutcome::new(
        format!("run {run_id}: v_sup nonincreasing"),
        m.v_monotone_violations == 0,
        format!(
            "{} violating steps of {}, worst relative increase {:e}",
            m.v_monotone_violations, m.steps, m.worst_v_increase
        ),
    ));
    out.push(AssertionOutcome::new(
        format!("run {run_id}: mass bound"),
        m.mass_violations == 0,
        format!(
            "{} violating records of {}, worst mass/bound {}",
            m.mass_violations, m.records, m.worst_mass_ratio
        ),
    ));
}

fn dim_u32(grid: &GridSpec) -> u32 {
    grid.dim() as u32
}

/// Builds the (χ·v₀, μ) tuples of the boundedness and blow-up scenarios.
fn plan_tuples(spec: &ExperimentSpec, v0_sup: f64) -> Result<Vec<Planned>, ExperimentError> {
    let n = dim_u32(&spec.grid);
    let base = spec.params.with_eps(0.0)?;
    let chi_v0s = if spec.axes.chi_v0.is_empty() {
        vec![base.chi() * v0_sup]
    } else {
        spec.axes.chi_v0.clone()
    };
    let mut plans = Vec::new();
    for &chi_v0 in &chi_v0s {
        if !(chi_v0 >= 0.0) || !chi_v0.is_finite() {
            return Err(ExperimentError::Invalid(format!("chi_v0 = {chi_v0} must be finite and >= 0")));
        }
        let chi = if v0_sup > 0.0 { chi_v0 / v0_sup } else { 0.0 };
        let with_chi = base.with_chi(chi)?;
        let mut mus: Vec<f64> = spec.axes.mu.clone();
        if !spec.axes.mu_factor.is_empty() {
            let least = model::least_threshold(&with_chi, v0_sup, n)?;
            mus.extend(spec.axes.mu_factor.iter().map(|f| f * least.threshold));
        }
        if mus.is_empty() {
            mus.push(base.mu());
        }
        for mu in mus {
            let params = with_chi.with_mu(mu)?;
            let condition = model::least_threshold(&params, v0_sup, n)?;
            plans.push(Planned {
                params,
                chi_v0_sup: chi_v0,
                condition: Some(condition),
            });
        }
    }
    Ok(plans)
}

fn require_strict(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    if spec.params.is_relaxed() {
        return Err(ExperimentError::Invalid(format!(
            "scenario {} requires chi, kappa, mu > 0",
            spec.scenario.as_str()
        )));
    }
    Ok(())
}

/// Dispatches on `spec.scenario`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    match spec.scenario {
        Scenario::Boundedness => exp_boundedness(spec),
        Scenario::Stabilization => exp_stabilization(spec),
        Scenario::EpsLimit => exp_eps_limit(spec),
        Scenario::BlowupProbe => exp_blowup_probe(spec),
        Scenario::Mms => manufactured_convergence(spec),
    }
}

/// Runs every (χ·v₀, μ) tuple with ε = 0 and asserts that tuples meeting
/// the μ-condition stay bounded. Unsatisfied tuples are recorded only.
pub fn exp_boundedness(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    require_strict(spec)?;
    let init = spec.initial_data(spec.grid)?;
    let v0_sup = grid::norm_inf(&init.v0);
    let plans = plan_tuples(spec, v0_sup)?;
    let n = dim_u32(&spec.grid);

    let executed: Vec<Executed> = plans
        .par_iter()
        .map(|p| {
            let monitor = RunMonitor::new(&init, &p.params);
            execute(&init, &p.params, &spec.solver, &spec.sampling, None, monitor)
        })
        .collect();

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut assertions = Vec::new();
    for (run_id, (plan, ex)) in plans.iter().zip(&executed).enumerate() {
        let theorem = model::theorem_variant_threshold(plan.chi_v0_sup, n)?;
        let satisfied = plan.condition.map_or(false, |c| c.satisfied);
        if satisfied {
            assertions.push(AssertionOutcome::new(
                format!("run {run_id}: condition satisfied implies bounded"),
                is_bounded(ex.result.termination),
                format!("termination {}, max u_sup {}", ex.result.termination, ex.monitor.max_u_sup),
            ));
        }
        if is_bounded(ex.result.termination) {
            invariant_assertions(run_id, ex, &mut assertions);
        }
        let extras = vec![
            ("theorem_threshold".to_string(), theorem),
            ("mass_bound".to_string(), ex.monitor.mass_bound()),
            ("v_monotone_violations".to_string(), ex.monitor.v_monotone_violations as f64),
            ("mass_violations".to_string(), ex.monitor.mass_violations as f64),
        ];
        rows.push(row_for(run_id, plan, ex, extras));
        runs.push(artifacts(run_id, ex, spec.snapshots));
    }
    Ok(SweepResult {
        scenario: Scenario::Boundedness,
        rows,
        runs,
        tables: Vec::new(),
        assertions,
    })
}

/// `∫_{t_end−1}^{t_end} ‖u − κ/μ‖₂` by the trapezoid rule over the records
/// in the window.
pub fn final_window_integral(records: &[DiagnosticsRecord]) -> Option<f64> {
    let t_end = records.last()?.t;
    let start = (t_end - 1.0).max(0.0);
    let window: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t >= start - 1e-12)
        .map(|r| r.u_dist_l2.map(|d| (r.t, d)))
        .collect::<Option<_>>()?;
    Some(window.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum())
}

/// Runs to `t_end` (one run per ε, base ε if the axis is empty) and asserts
/// convergence to `(κ/μ, 0)`, the dissipation inequality and the
/// diagnostics invariants.
pub fn exp_stabilization(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    require_strict(spec)?;
    if !(spec.params.kappa() > 0.0) {
        return Err(ExperimentError::Invalid("stabilization requires kappa > 0".into()));
    }
    let init = spec.initial_data(spec.grid)?;
    let eps_list = if spec.axes.eps.is_empty() {
        vec![spec.params.eps()]
    } else {
        spec.axes.eps.clone()
    };
    let v0_sup = grid::norm_inf(&init.v0);
    let n = dim_u32(&spec.grid);
    let plans = eps_list
        .iter()
        .map(|&eps| {
            let params = spec.params.with_eps(eps)?;
            Ok(Planned {
                params,
                chi_v0_sup: params.chi() * v0_sup,
                condition: Some(model::least_threshold(&params, v0_sup, n)?),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let executed: Vec<Executed> = plans
        .par_iter()
        .map(|p| {
            let monitor = RunMonitor::new(&init, &p.params).with_tolerance(spec.tolerance, &init);
            execute(&init, &p.params, &spec.solver, &spec.sampling, None, monitor)
        })
        .collect();

    let tol = spec.tolerance;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut assertions = Vec::new();
    for (run_id, (plan, ex)) in plans.iter().zip(&executed).enumerate() {
        let params = &plan.params;
        let eq = params.equilibrium().expect("kappa > 0 checked above");
        let last = ex.result.records.last().expect("initial record");
        let first = &ex.result.records[0];
        let u_dist = ex.result.final_state.u.values().iter().fold(0.0f64, |m, &x| m.max((x - eq).abs()));
        let v_sup = grid::norm_inf(&ex.result.final_state.v);

        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: reached t_end"),
            is_bounded(ex.result.termination),
            format!("termination {}", ex.result.termination),
        ));
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: u converges to kappa/mu"),
            u_dist < tol,
            format!("sup|u - {eq}| = {u_dist:e} at t = {}, tol {tol:e}", last.t),
        ));
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: v converges to 0"),
            v_sup < tol,
            format!("sup v = {v_sup:e} at t = {}, tol {tol:e}", last.t),
        ));
        let dissipation = dissipation_check(&ex.result.records, params, spec.dissipation_tol)
            .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: lyapunov dissipation"),
            dissipation.passed(),
            format!(
                "{} of {} intervals exceed tol {:e}, worst excess {:e}",
                dissipation.failures, dissipation.intervals, spec.dissipation_tol, dissipation.worst_excess
            ),
        ));
        let (f0, ft) = (first.lyapunov_f.unwrap_or(f64::NAN), last.lyapunov_f.unwrap_or(f64::NAN));
        let accumulated = last.cum_dissipation / params.mu();
        let budget = (f0 - ft) / params.mu() + 1e-3;
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: cumulative dissipation budget"),
            accumulated <= budget,
            format!("integral of (u - kappa/mu)^2 = {accumulated}, (F(0) - F(T))/mu + 1e-3 = {budget}"),
        ));
        invariant_assertions(run_id, ex, &mut assertions);

        let extras = vec![
            ("u_settled_at".to_string(), ex.monitor.u_settled_at.unwrap_or(f64::NAN)),
            ("v_settled_at".to_string(), ex.monitor.v_settled_at.unwrap_or(f64::NAN)),
            ("final_u_dist_inf".to_string(), u_dist),
            ("lyapunov_F0".to_string(), f0),
            ("lyapunov_FT".to_string(), ft),
            ("worst_dissipation_excess".to_string(), dissipation.worst_excess),
            ("final_window_l2".to_string(), final_window_integral(&ex.result.records).unwrap_or(f64::NAN)),
        ];
        rows.push(row_for(run_id, plan, ex, extras));
        runs.push(artifacts(run_id, ex, spec.snapshots));
    }
    Ok(SweepResult {
        scenario: Scenario::Stabilization,
        rows,
        runs,
        tables: Vec::new(),
        assertions,
    })
}

/// `‖a − b‖_{L²(Ω×(0,T))}` for trajectories sampled at the same times,
/// trapezoid rule in time. Returns `(d_u, d_v)`.
pub fn trajectory_distance(a: &[TrajectorySample], b: &[TrajectorySample]) -> Result<(f64, f64), ExperimentError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x.t - y.t).abs() > 1e-9 * (1.0 + x.t.abs())) {
        return Err(ExperimentError::Invalid("trajectories are sampled at different times".into()));
    }
    let sq = |x: &Field, y: &Field| {
        let diff = x.zip_map(y, |p, q| p - q);
        grid::inner(&diff, &diff)
    };
    let mut du = 0.0;
    let mut dv = 0.0;
    for w in a.windows(2).zip(b.windows(2)) {
        let (wa, wb) = w;
        let dt = wa[1].t - wa[0].t;
        du += 0.5 * dt * (sq(&wa[0].u, &wb[0].u) + sq(&wa[1].u, &wb[1].u));
        dv += 0.5 * dt * (sq(&wa[0].v, &wb[0].v) + sq(&wa[1].v, &wb[1].v));
    }
    Ok((du.sqrt(), dv.sqrt()))
}

/// The default ε ladder `0.1·2⁻ᵏ`, `k = 0..=4`.
pub fn default_eps_ladder() -> Vec<f64> {
    (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect()
}

/// Runs the ε ladder on a fixed grid and horizon and asserts the
/// consecutive distances shrink: `d_{K−1} < d_0 / 4` for u and v.
pub fn exp_eps_limit(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    require_strict(spec)?;
    let eps_list = if spec.axes.eps.is_empty() {
        default_eps_ladder()
    } else {
        spec.axes.eps.clone()
    };
    if eps_list.len() < 2 {
        return Err(ExperimentError::Invalid("eps_limit needs at least two eps values".into()));
    }
    let init = spec.initial_data(spec.grid)?;
    let v0_sup = grid::norm_inf(&init.v0);
    let n = dim_u32(&spec.grid);
    let plans = eps_list
        .iter()
        .map(|&eps| {
            let params = spec.params.with_eps(eps)?;
            Ok(Planned {
                params,
                chi_v0_sup: params.chi() * v0_sup,
                condition: Some(model::least_threshold(&params, v0_sup, n)?),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut executed: Vec<Executed> = plans
        .par_iter()
        .map(|p| {
            let monitor = RunMonitor::new(&init, &p.params).collecting();
            execute(&init, &p.params, &spec.solver, &spec.sampling, None, monitor)
        })
        .collect();
    let trajectories: Vec<Vec<TrajectorySample>> = executed.iter_mut().map(|ex| ex.monitor.take_samples()).collect();

    let mut assertions = Vec::new();
    let mut table = Table {
        name: "eps_distances.csv".into(),
        header: ["k", "eps_a", "eps_b", "d_u", "d_v"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut distances = Vec::new();
    for k in 0..eps_list.len() - 1 {
        let (du, dv) = trajectory_distance(&trajectories[k], &trajectories[k + 1])?;
        table.rows.push(vec![
            k.to_string(),
            crate::io::num(eps_list[k]),
            crate::io::num(eps_list[k + 1]),
            crate::io::num(du),
            crate::io::num(dv),
        ]);
        distances.push((du, dv));
    }
    let (d0, dl) = (distances[0], distances[distances.len() - 1]);
    let last = distances.len() - 1;
    assertions.push(AssertionOutcome::new(
        "eps Cauchy decay (u)",
        dl.0 < d0.0 / 4.0,
        format!("d_{last} = {:e}, d_0 / 4 = {:e}", dl.0, d0.0 / 4.0),
    ));
    assertions.push(AssertionOutcome::new(
        "eps Cauchy decay (v)",
        dl.1 < d0.1 / 4.0,
        format!("d_{last} = {:e}, d_0 / 4 = {:e}", dl.1, d0.1 / 4.0),
    ));

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (run_id, (plan, ex)) in plans.iter().zip(&executed).enumerate() {
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: reached t_end"),
            is_bounded(ex.result.termination),
            format!("termination {}", ex.result.termination),
        ));
        invariant_assertions(run_id, ex, &mut assertions);
        let (du, dv) = distances.get(run_id).copied().unwrap_or((f64::NAN, f64::NAN));
        let extras = vec![
            ("d_u_next".to_string(), du),
            ("d_v_next".to_string(), dv),
            ("final_window_l2".to_string(), final_window_integral(&ex.result.records).unwrap_or(f64::NAN)),
        ];
        rows.push(row_for(run_id, plan, ex, extras));
        runs.push(artifacts(run_id, ex, spec.snapshots));
    }
    Ok(SweepResult {
        scenario: Scenario::EpsLimit,
        rows,
        runs,
        tables: vec![table],
        assertions,
    })
}

/// Classification of a probe run.
pub fn classify(termination: Termination) -> &'static str {
    match termination {
        Termination::ReachedTEnd | Termination::SteadyState => "bounded",
        Termination::BlowUp => "blow_up",
        Termination::TimedOut => "timed_out",
        Termination::SolverFailure => "solver_failure",
    }
}

/// Maps `max ‖u‖∞` over a (μ, χ·v₀) grid. The only assertion is that
/// tuples meeting the μ-condition are classified bounded.
pub fn exp_blowup_probe(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    require_strict(spec)?;
    let init = spec.initial_data(spec.grid)?;
    let v0_sup = grid::norm_inf(&init.v0);
    let mut plans = plan_tuples(spec, v0_sup)?;
    plans.sort_by(|a, b| {
        a.params
            .mu()
            .total_cmp(&b.params.mu())
            .then(a.chi_v0_sup.total_cmp(&b.chi_v0_sup))
    });

    let executed: Vec<Executed> = plans
        .par_iter()
        .map(|p| {
            let monitor = RunMonitor::new(&init, &p.params);
            execute(&init, &p.params, &spec.solver, &spec.sampling, None, monitor)
        })
        .collect();

    let mut table = Table {
        name: "boundary_map.csv".into(),
        header: ["run_id", "mu", "chi_v0_sup", "threshold", "condition_satisfied", "classification", "max_u_sup", "final_t"]
            .map(String::from)
            .to_vec(),
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut assertions = Vec::new();
    for (run_id, (plan, ex)) in plans.iter().zip(&executed).enumerate() {
        let class = classify(ex.result.termination);
        let cond = plan.condition.expect("probe tuples carry a condition report");
        if cond.satisfied {
            assertions.push(AssertionOutcome::new(
                format!("run {run_id}: condition satisfied implies bounded"),
                class == "bounded",
                format!("classified {class}, max u_sup {}", ex.monitor.max_u_sup),
            ));
        }
        table.rows.push(vec![
            run_id.to_string(),
            crate::io::num(plan.params.mu()),
            crate::io::num(plan.chi_v0_sup),
            crate::io::num(cond.threshold),
            cond.satisfied.to_string(),
            class.to_string(),
            crate::io::num(ex.monitor.max_u_sup),
            crate::io::num(ex.result.final_state.t),
        ]);
        rows.push(row_for(run_id, plan, ex, Vec::new()));
        runs.push(artifacts(run_id, ex, spec.snapshots));
    }
    Ok(SweepResult {
        scenario: Scenario::BlowupProbe,
        rows,
        runs,
        tables: vec![table],
        assertions,
    })
}

/// One level of a manufactured-solution refinement study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmsLevel {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    pub err_u: f64,
    pub err_v: f64,
}

/// Observed orders `log2(e_k / e_{k+1}) / log2(h_k / h_{k+1})` between
/// consecutive levels, for u and v.
pub fn observed_orders(levels: &[MmsLevel]) -> Vec<(f64, f64)> {
    levels
        .windows(2)
        .map(|w| {
            let r = (w[0].h / w[1].h).ln();
            ((w[0].err_u / w[1].err_u).ln() / r, (w[0].err_v / w[1].err_v).ln() / r)
        })
        .collect()
}

fn l2_error(numeric: &Field, exact: &Field) -> f64 {
    let diff = numeric.zip_map(exact, |a, b| a - b);
    grid::inner(&diff, &diff).sqrt()
}

/// Solves with the manufactured forcing at each refinement level
/// (`dt = dt_factor · h²`, central taxis reconstruction) and asserts
/// observed spatial orders of at least 1.8 for both fields.
pub fn manufactured_convergence(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    let cells = if spec.axes.cells.is_empty() {
        vec![32, 64, 128]
    } else {
        spec.axes.cells.clone()
    };
    if cells.len() < 2 {
        return Err(ExperimentError::Invalid("mms needs at least two refinement levels".into()));
    }
    if !(spec.dt_factor > 0.0) {
        return Err(ExperimentError::Invalid(format!("dt_factor = {} must be > 0", spec.dt_factor)));
    }
    let lengths = spec.grid.lengths();
    let grids = cells
        .iter()
        .map(|&n| match spec.grid.dim() {
            1 => GridSpec::line(n, lengths[0]),
            _ => GridSpec::rect(n, n, lengths[0], lengths[1]),
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    let t_end = spec.solver.t_end;

    let executed: Vec<(Executed, MmsLevel, ManufacturedSolution)> = grids
        .par_iter()
        .map(|grid| {
            let exact = ManufacturedSolution::new(spec.params, grid);
            let h = grid.min_spacing();
            let dt = (spec.dt_factor * h * h).min(t_end.max(f64::MIN_POSITIVE));
            let solver = SolverConfig {
                dt,
                adaptive: false,
                steady_tol: 0.0,
                taxis_scheme: TaxisScheme::Central,
                ..spec.solver
            };
            let init = InitialData::new(exact.sample_u(*grid, 0.0), exact.sample_v(*grid, 0.0))
                .expect("manufactured data is positive");
            let monitor = RunMonitor::new(&init, &spec.params);
            let sampling = Sampling { every: t_end, ..spec.sampling };
            let ex = execute(&init, &spec.params, &solver, &sampling, Some(&exact), monitor);
            let t = ex.result.final_state.t;
            let level = MmsLevel {
                cells: grid.cells()[0],
                h,
                dt,
                err_u: l2_error(&ex.result.final_state.u, &exact.sample_u(*grid, t)),
                err_v: l2_error(&ex.result.final_state.v, &exact.sample_v(*grid, t)),
            };
            (ex, level, exact)
        })
        .collect();

    let levels: Vec<MmsLevel> = executed.iter().map(|e| e.1).collect();
    let orders = observed_orders(&levels);
    let mut table = Table {
        name: "mms_orders.csv".into(),
        header: ["cells", "h", "dt", "err_u", "err_v", "order_u", "order_v"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut assertions = Vec::new();
    for (run_id, (ex, level, _)) in executed.iter().enumerate() {
        let (ou, ov) = if run_id == 0 { (f64::NAN, f64::NAN) } else { orders[run_id - 1] };
        table.rows.push(
            [level.cells as f64, level.h, level.dt, level.err_u, level.err_v, ou, ov]
                .iter()
                .map(|&x| crate::io::num(x))
                .collect(),
        );
        assertions.push(AssertionOutcome::new(
            format!("run {run_id}: reached t_end"),
            ex.result.termination == Termination::ReachedTEnd,
            format!("termination {}", ex.result.termination),
        ));
        let plan = Planned {
            params: spec.params,
            chi_v0_sup: spec.params.chi() * ex.result.records[0].v_sup,
            condition: None,
        };
        let extras = vec![
            ("cells".to_string(), level.cells as f64),
            ("dt".to_string(), level.dt),
            ("err_u".to_string(), level.err_u),
            ("err_v".to_string(), level.err_v),
            ("order_u".to_string(), ou),
            ("order_v".to_string(), ov),
        ];
        rows.push(row_for(run_id, &plan, ex, extras));
        runs.push(artifacts(run_id, ex, spec.snapshots));
    }
    let min_u = orders.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let min_v = orders.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    assertions.push(AssertionOutcome::new("mms order (u)", min_u >= 1.8, format!("min observed order {min_u}")));
    assertions.push(AssertionOutcome::new("mms order (v)", min_v >= 1.8, format!("min observed order {min_v}")));
    Ok(SweepResult {
        scenario: Scenario::Mms,
        rows,
        runs,
        tables: vec![table],
        assertions,
    })
}
