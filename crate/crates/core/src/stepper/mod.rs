//! IMEX time stepping and the run loop.
//!
//! One step first solves the consumption equation with the coefficient
//! frozen at `uⁿ`,
//!
//! ```text
//! (I − dtΔ + dt·uⁿ) vⁿ⁺¹ = vⁿ
//! ```
//!
//! and then the population equation with explicit taxis and source,
//!
//! ```text
//! (I − dtΔ) uⁿ⁺¹ = uⁿ + dt·(−∇·(χ uⁿ ∇vⁿ⁺¹) + f(uⁿ))
//! ```

mod linsolve;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use linsolve::{solve_shifted_laplacian, LinearSolution, LinearSolveError, LinearSolverSettings};

use crate::diagnostics::{dissipation_rate, DiagnosticsConfig, DiagnosticsRecord};
use crate::grid::{self, Field, TaxisScheme};
use crate::model::{reaction_nonneg, InitialData, ModelParams};

/// What to do when `uⁿ⁺¹` has cells below zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PositivityPolicy {
    /// Raise every cell below `floor` to `floor` and count it.
    Clamp { floor: f64 },
    /// Reject the step and retry with half the step size.
    Reject,
}

impl Default for PositivityPolicy {
    fn default() -> Self {
        PositivityPolicy::Clamp { floor: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub adaptive: bool,
    /// Scales the taxis CFL bound `χ‖∇v‖∞ dt/h ≤ 0.5`.
    pub safety: f64,
    pub t_end: f64,
    pub blowup_threshold: f64,
    /// 0 disables steady-state detection.
    pub steady_tol: f64,
    pub positivity: PositivityPolicy,
    pub taxis_scheme: TaxisScheme,
    pub linsolve_tol: f64,
    pub linsolve_maxiter: usize,
    /// Wall-clock cap; `None` runs to completion.
    pub max_wall_time: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            adaptive: false,
            safety: 1.0,
            t_end: 1.0,
            blowup_threshold: 1e6,
            steady_tol: 0.0,
            positivity: PositivityPolicy::default(),
            taxis_scheme: TaxisScheme::Upwind,
            linsolve_tol: 1e-12,
            linsolve_maxiter: 2000,
            max_wall_time: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} = {value}: {reason}")]
    Invalid {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, value, reason| Err(ConfigError::Invalid { field, value, reason });
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt", self.dt, "must be positive");
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad("t_end", self.t_end, "must be nonnegative and finite");
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return bad("dt", self.dt, "must not exceed t_end");
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad("safety", self.safety, "must lie in (0, 1]");
        }
        if !(self.blowup_threshold > 0.0) {
            return bad("blowup_threshold", self.blowup_threshold, "must be positive");
        }
        if !(self.steady_tol >= 0.0) {
            return bad("steady_tol", self.steady_tol, "must be nonnegative");
        }
        if let PositivityPolicy::Clamp { floor } = self.positivity {
            if !(floor >= 0.0) || !floor.is_finite() {
                return bad("positivity_floor", floor, "must be nonnegative");
            }
        }
        if !(self.linsolve_tol > 0.0) {
            return bad("linsolve_tol", self.linsolve_tol, "must be positive");
        }
        if self.linsolve_maxiter == 0 {
            return bad("linsolve_maxiter", 0.0, "must be positive");
        }
        Ok(())
    }

    fn linear_settings(&self) -> LinearSolverSettings {
        LinearSolverSettings {
            tol: self.linsolve_tol,
            max_iter: self.linsolve_maxiter,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub step_index: usize,
}

impl SimState {
    pub fn initial(init: &InitialData) -> Self {
        SimState {
            t: 0.0,
            u: init.u0.clone(),
            v: init.v0.clone(),
            step_index: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Step size actually taken.
    pub dt: f64,
    pub clamped_cells: usize,
    pub v_iterations: usize,
    pub u_iterations: usize,
    /// Attempts rejected before this one was accepted.
    pub rejections: usize,
    /// `χ‖∇v‖∞ dt/h` of the accepted attempt.
    pub cfl: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("linear solve failed in the {field} update: {source}")]
    LinearSolve {
        field: &'static str,
        #[source]
        source: LinearSolveError,
    },
    #[error("non-finite value in the {0} update")]
    NonFinite(&'static str),
    #[error("step size underflow: dt = {0:e}")]
    StepTooSmall(f64),
}

/// Extra volumetric sources `(f_u, f_v)` added to the right-hand sides,
/// evaluated at the new time level. Used for manufactured solutions.
pub trait Forcing {
    fn sources(&self, u_grid: &Field, t: f64) -> (Field, Field);
}

const MAX_HALVINGS: usize = 40;
const CFL_LIMIT: f64 = 0.5;

/// Advances `state` by one accepted step of (at most) `dt`.
///
/// Rejected attempts (negativity under [`PositivityPolicy::Reject`], or a
/// taxis CFL violation when `config.adaptive`) are retried with half the
/// step size.
pub fn step(
    state: &SimState,
    params: &ModelParams,
    config: &SolverConfig,
    dt: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<(SimState, StepReport), StepError> {
    let settings = config.linear_settings();
    let h = state.u.grid().min_spacing();
    let mut dt = dt;
    let mut rejections = 0;
    loop {
        if rejections > MAX_HALVINGS {
            return Err(StepError::StepTooSmall(dt));
        }
        let t_new = state.t + dt;
        let sources = forcing.map(|f| f.sources(&state.u, t_new));

        let mut v_rhs = state.v.clone();
        if let Some((_, fv)) = &sources {
            for (r, s) in v_rhs.values_mut().iter_mut().zip(fv.values()) {
                *r += dt * s;
            }
        }
        let v_sol = solve_shifted_laplacian(&v_rhs, Some(&state.u), dt, &settings)
            .map_err(|source| StepError::LinearSolve { field: "v", source })?;
        let v_new = v_sol.solution;
        if !v_new.is_finite() {
            return Err(StepError::NonFinite("v"));
        }

        let cfl = params.chi() * max_face_gradient(&v_new) * dt / h;
        if config.adaptive && cfl > CFL_LIMIT * config.safety {
            dt *= 0.5;
            rejections += 1;
            continue;
        }

        let div = grid::chemotaxis_divergence(&state.u, &v_new, params.chi(), config.taxis_scheme);
        let mut u_rhs = state.u.clone();
        for ((r, &d), &u) in u_rhs.values_mut().iter_mut().zip(div.values()).zip(state.u.values()) {
            *r += dt * (-d + reaction_nonneg(u, params));
        }
        if let Some((fu, _)) = &sources {
            for (r, s) in u_rhs.values_mut().iter_mut().zip(fu.values()) {
                *r += dt * s;
            }
        }
        if !u_rhs.is_finite() {
            return Err(StepError::NonFinite("u"));
        }
        let u_sol = solve_shifted_laplacian(&u_rhs, None, dt, &settings)
            .map_err(|source| StepError::LinearSolve { field: "u", source })?;
        let mut u_new = u_sol.solution;
        if !u_new.is_finite() {
            return Err(StepError::NonFinite("u"));
        }

        let mut clamped_cells = 0;
        match config.positivity {
            PositivityPolicy::Reject => {
                if u_new.values().iter().any(|&x| x < 0.0) {
                    dt *= 0.5;
                    rejections += 1;
                    continue;
                }
            }
            PositivityPolicy::Clamp { floor } => {
                for x in u_new.values_mut() {
                    if *x < floor {
                        *x = floor;
                        clamped_cells += 1;
                    }
                }
            }
        }

        let next = SimState {
            t: t_new,
            u: u_new,
            v: v_new,
            step_index: state.step_index + 1,
        };
        let report = StepReport {
            dt,
            clamped_cells,
            v_iterations: v_sol.iterations,
            u_iterations: u_sol.iterations,
            rejections,
            cfl,
        };
        return Ok((next, report));
    }
}

/// `max |v_R − v_L| / h` over interior faces.
fn max_face_gradient(v: &Field) -> f64 {
    let grid = v.grid();
    let vals = v.values();
    let nx = grid.cells()[0];
    let mut m: f64 = 0.0;
    for k in 0..vals.len() {
        if k % nx + 1 < nx {
            m = m.max((vals[k + 1] - vals[k]).abs() / grid.spacing(0));
        }
        if grid.dim() == 2 && k + nx < vals.len() {
            m = m.max((vals[k + nx] - vals[k]).abs() / grid.spacing(1));
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedTEnd,
    SteadyState,
    BlowUp,
    SolverFailure,
    /// Wall-clock cap hit; distinct from blow-up.
    TimedOut,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::SteadyState => "steady_state",
            Termination::BlowUp => "blow_up",
            Termination::SolverFailure => "solver_failure",
            Termination::TimedOut => "timed_out",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub termination: Termination,
    pub final_state: SimState,
    pub records: Vec<DiagnosticsRecord>,
    pub wall_time: Duration,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub clamped_cells: usize,
    pub failure: Option<StepError>,
}

/// Sampling and diagnostics options of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    pub every: f64,
    pub diagnostics: DiagnosticsConfig,
}

impl Sampling {
    pub fn every(every: f64) -> Self {
        Sampling {
            every,
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

/// Hooks into a running simulation.
pub trait Observer {
    /// Called after every accepted step.
    fn on_step(&mut self, _state: &SimState, _report: &StepReport) {}
    /// Called whenever a diagnostics record is emitted (including `t = 0`).
    fn on_sample(&mut self, _state: &SimState, _record: &DiagnosticsRecord) {}
}

impl Observer for () {}

/// Runs with default diagnostics and no observer.
pub fn run(init: &InitialData, params: &ModelParams, config: &SolverConfig, sample_every: f64) -> RunResult {
    run_observed(init, params, config, &Sampling::every(sample_every), None, &mut ())
}

/// Steps from `init` until `t_end`, steady state, blow-up, failure or the
/// wall-clock cap. Steps are shortened to land exactly on sample times.
pub fn run_observed(
    init: &InitialData,
    params: &ModelParams,
    config: &SolverConfig,
    sampling: &Sampling,
    forcing: Option<&dyn Forcing>,
    observer: &mut dyn Observer,
) -> RunResult {
    let start = Instant::now();
    let mut state = SimState::initial(init);
    let mut records = Vec::new();
    let mut cum = 0.0;
    let mut rate = dissipation_rate(&state.u, params);
    let emit = |state: &SimState, cum: f64, records: &mut Vec<DiagnosticsRecord>, observer: &mut dyn Observer| {
        let rec = DiagnosticsRecord::compute(state.t, &state.u, &state.v, params, &sampling.diagnostics, cum);
        observer.on_sample(state, &rec);
        records.push(rec);
    };
    emit(&state, cum, &mut records, observer);

    let sample_every = if sampling.every > 0.0 { sampling.every } else { f64::INFINITY };
    let mut sample_index: u64 = 1;
    let mut current_dt = config.dt;
    let mut since_change = 0usize;
    let mut rejected_steps = 0;
    let mut clamped_cells = 0;
    let mut accepted_steps = 0;

    let (termination, failure) = loop {
        if state.t >= config.t_end {
            break (Termination::ReachedTEnd, None);
        }
        if let Some(cap) = config.max_wall_time {
            if start.elapsed() > cap {
                break (Termination::TimedOut, None);
            }
        }
        let next_sample = sample_index as f64 * sample_every;
        let target = next_sample.min(config.t_end);
        let remaining = target - state.t;
        let (try_dt, lands) = if remaining <= current_dt * (1.0 + 1e-6) {
            (remaining, true)
        } else {
            (current_dt, false)
        };

        let (mut next, report) = match step(&state, params, config, try_dt, forcing) {
            Ok(ok) => ok,
            Err(e) => break (Termination::SolverFailure, Some(e)),
        };
        if lands && report.rejections == 0 {
            next.t = target;
        }
        accepted_steps += 1;
        rejected_steps += report.rejections;
        clamped_cells += report.clamped_cells;

        let next_rate = dissipation_rate(&next.u, params);
        cum += 0.5 * (rate + next_rate) * report.dt;
        rate = next_rate;

        if report.rejections > 0 && config.adaptive {
            current_dt = report.dt;
            since_change = 0;
        } else if config.adaptive && !lands {
            since_change += 1;
            if since_change >= 10 && current_dt < config.dt {
                current_dt = (2.0 * current_dt).min(config.dt);
                since_change = 0;
            }
        }

        let steady = config.steady_tol > 0.0 && {
            let du = max_abs_diff(&next.u, &state.u) / report.dt;
            let dv = max_abs_diff(&next.v, &state.v) / report.dt;
            du < config.steady_tol && dv < config.steady_tol
        };
        observer.on_step(&next, &report);
        state = next;

        if grid::norm_inf(&state.u) >= config.blowup_threshold {
            emit(&state, cum, &mut records, observer);
            break (Termination::BlowUp, None);
        }
        let at_sample = state.t >= next_sample;
        if at_sample {
            while sample_index as f64 * sample_every <= state.t {
                sample_index += 1;
            }
        }
        if steady {
            emit(&state, cum, &mut records, observer);
            break (Termination::SteadyState, None);
        }
        if at_sample || state.t >= config.t_end {
            emit(&state, cum, &mut records, observer);
        }
    };

    if matches!(termination, Termination::SolverFailure | Termination::TimedOut)
        && records.last().map_or(true, |r| r.t != state.t)
    {
        emit(&state, cum, &mut records, observer);
    }

    RunResult {
        termination,
        final_state: state,
        records,
        wall_time: start.elapsed(),
        accepted_steps,
        rejected_steps,
        clamped_cells,
        failure,
    }
}

fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
