//! Functionals evaluated along trajectories and discrete checks of the
//! inequalities they are expected to satisfy.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{self, Field};
use crate::model::ModelParams;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("{0} requires kappa > 0")]
    NotApplicable(&'static str),
    #[error("{functional}: density at cell {cell} is {value}, must be positive")]
    Domain {
        functional: &'static str,
        cell: usize,
        value: f64,
    },
    #[error("configuration: {0}")]
    Config(String),
}

/// Knobs for the per-record functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    /// Exponent of `y_p` and of the `v` norm column.
    pub p: f64,
    /// Exponent of the interpolation-inequality check.
    pub q: f64,
    /// Lower cut-off for `v` in the quasi-energy denominator.
    pub v_floor: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            p: 2.0,
            q: 1.0,
            v_floor: 1e-12,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.p >= 1.0) {
            return Err(DiagnosticsError::Config(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.q >= 1.0) {
            return Err(DiagnosticsError::Config(format!("q must be >= 1, got {}", self.q)));
        }
        if !(self.v_floor > 0.0) {
            return Err(DiagnosticsError::Config(format!(
                "v_floor must be positive, got {}",
                self.v_floor
            )));
        }
        Ok(())
    }
}

/// One sample of every tracked functional. Field order matches the CSV
/// column order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub u_sup: f64,
    pub v_sup: f64,
    pub grad_v_l2sq: f64,
    pub y_p: f64,
    pub lyapunov_f: Option<f64>,
    pub entropy_e: f64,
    pub u_dist_l2: Option<f64>,
    pub v_lp: f64,
    pub cum_dissipation: f64,
}

impl DiagnosticsRecord {
    pub fn compute(
        t: f64,
        u: &Field,
        v: &Field,
        params: &ModelParams,
        config: &DiagnosticsConfig,
        cum_dissipation: f64,
    ) -> Self {
        let grad_sq = grid::gradient_norm_sq(v);
        let vol = u.grid().cell_volume();
        let grad_v_l2sq = grad_sq.values().iter().sum::<f64>() * vol;
        let y_p = coupled_terms(u, &grad_sq, config.p).0;
        let u_dist_l2 = params
            .equilibrium()
            .map(|eq| grid::norm_lp(&u.map(|x| x - eq), 2.0));
        DiagnosticsRecord {
            t,
            mass: grid::integrate(u),
            u_sup: grid::norm_inf(u),
            v_sup: grid::norm_inf(v),
            grad_v_l2sq,
            y_p,
            lyapunov_f: lyapunov_f(u, v, params).ok(),
            entropy_e: entropy_with_gradient(u, v, &grad_sq, params.chi(), config.v_floor),
            u_dist_l2,
            v_lp: grid::norm_lp(v, config.p),
            cum_dissipation,
        }
    }
}

/// Instantaneous dissipation rate `μ∫(u − κ/μ)²`; zero when `μ = 0`.
pub fn dissipation_rate(u: &Field, params: &ModelParams) -> f64 {
    if params.mu() <= 0.0 {
        return 0.0;
    }
    let eq = params.kappa() / params.mu();
    let s: f64 = u.values().iter().map(|&x| (x - eq) * (x - eq)).sum();
    params.mu() * s * u.grid().cell_volume()
}

/// `∫u − (κ/μ)∫ln u + (κ/2μ)∫v²`.
pub fn lyapunov_f(u: &Field, v: &Field, params: &ModelParams) -> Result<f64, DiagnosticsError> {
    if !(params.kappa() > 0.0) || params.mu() <= 0.0 {
        return Err(DiagnosticsError::NotApplicable("lyapunov_F"));
    }
    if let Some((cell, &value)) = u.values().iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(DiagnosticsError::Domain {
            functional: "lyapunov_F",
            cell,
            value,
        });
    }
    let ratio = params.kappa() / params.mu();
    let mut total = 0.0;
    for (&a, &b) in u.values().iter().zip(v.values()) {
        total += a - ratio * a.ln() + 0.5 * ratio * b * b;
    }
    Ok(total * u.grid().cell_volume())
}

/// `∫u ln u + (χ/2)∫|∇v|²/max(v, v_floor)`, with `0 ln 0 = 0`.
pub fn entropy_energy(u: &Field, v: &Field, params: &ModelParams, v_floor: f64) -> Result<f64, DiagnosticsError> {
    if !(v_floor > 0.0) {
        return Err(DiagnosticsError::Config(format!("v_floor must be positive, got {v_floor}")));
    }
    if let Some((cell, &value)) = u.values().iter().enumerate().find(|(_, x)| **x < 0.0) {
        return Err(DiagnosticsError::Domain {
            functional: "entropy_E",
            cell,
            value,
        });
    }
    let grad_sq = grid::gradient_norm_sq(v);
    Ok(entropy_with_gradient(u, v, &grad_sq, params.chi(), v_floor))
}

fn entropy_with_gradient(u: &Field, v: &Field, grad_sq: &Field, chi: f64, v_floor: f64) -> f64 {
    let mut total = 0.0;
    for ((&a, &b), &g) in u.values().iter().zip(v.values()).zip(grad_sq.values()) {
        if a > 0.0 {
            total += a * a.ln();
        }
        total += 0.5 * chi * g / b.max(v_floor);
    }
    total * u.grid().cell_volume()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledFunctional {
    /// `∫uᵖ + ∫|∇v|^{2p}`.
    pub unweighted: f64,
    /// `∫uᵖ + χ^{2p}∫|∇v|^{2p}`.
    pub weighted: f64,
}

pub fn coupled_functional(u: &Field, v: &Field, p: f64, chi: f64) -> Result<CoupledFunctional, DiagnosticsError> {
    if !(p >= 1.0) {
        return Err(DiagnosticsError::Config(format!("p must be >= 1, got {p}")));
    }
    let grad_sq = grid::gradient_norm_sq(v);
    let (_, u_part, grad_part) = coupled_terms(u, &grad_sq, p);
    Ok(CoupledFunctional {
        unweighted: u_part + grad_part,
        weighted: u_part + chi.powf(2.0 * p) * grad_part,
    })
}

fn coupled_terms(u: &Field, grad_sq: &Field, p: f64) -> (f64, f64, f64) {
    let vol = u.grid().cell_volume();
    let u_part = u.values().iter().map(|x| x.abs().powf(p)).sum::<f64>() * vol;
    let grad_part = grad_sq.values().iter().map(|g| g.powf(p)).sum::<f64>() * vol;
    (u_part + grad_part, u_part, grad_part)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; `None` when `lhs < 1e-14` (degenerate, nothing to test).
    pub ratio: Option<f64>,
}

/// Compares `∫|∇c|^{2q+2}` against `2(4q²+N)‖c‖∞² ∫|∇c|^{2q−2}|D²c|²`.
pub fn check_interpolation_inequality(c: &Field, q: f64, n: u32) -> Result<InterpolationReport, DiagnosticsError> {
    if !(q >= 1.0) {
        return Err(DiagnosticsError::Config(format!("q must be >= 1, got {q}")));
    }
    let grad_sq = grid::gradient_norm_sq(c);
    let hess = grid::hessian_frobenius_sq(c);
    let vol = c.grid().cell_volume();
    let lhs = grad_sq.values().iter().map(|g| g.powf(q + 1.0)).sum::<f64>() * vol;
    let weighted = grad_sq
        .values()
        .iter()
        .zip(hess.values())
        .map(|(g, h)| g.powf(q - 1.0) * h)
        .sum::<f64>()
        * vol;
    let sup = grid::norm_inf(c);
    let rhs = 2.0 * (4.0 * q * q + n as f64) * sup * sup * weighted;
    let ratio = (lhs >= 1e-14).then(|| rhs / lhs);
    Ok(InterpolationReport { lhs, rhs, ratio })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianReport {
    pub max_violation: f64,
}

/// Largest positive part of `(Δc)² − N|D²c|²` over all cells.
pub fn check_hessian_inequality(c: &Field, n: u32) -> HessianReport {
    let lap = grid::laplacian(c);
    let hess = grid::hessian_frobenius_sq(c);
    let nf = n as f64;
    let max_violation = lap
        .values()
        .iter()
        .zip(hess.values())
        .map(|(l, h)| (l * l - nf * h).max(0.0))
        .fold(0.0, f64::max);
    HessianReport { max_violation }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    pub intervals: usize,
    /// Intervals where `F` was unavailable on an endpoint.
    pub skipped: usize,
    pub failures: usize,
    /// Largest `ΔF + Δcum − tol(1 + |F(t1)|)` seen, with its interval.
    pub worst_excess: f64,
    pub worst_interval: Option<(f64, f64)>,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.skipped == 0
    }
}

/// Checks `F(t2) − F(t1) + [cum(t2) − cum(t1)] ≤ tol(1 + |F(t1)|)` on
/// consecutive records.
pub fn dissipation_check(
    records: &[DiagnosticsRecord],
    params: &ModelParams,
    tol: f64,
) -> Result<DissipationReport, DiagnosticsError> {
    if !(params.kappa() > 0.0) {
        return Err(DiagnosticsError::NotApplicable("dissipation_check"));
    }
    if records.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(DiagnosticsError::Config("records are not time-ordered".into()));
    }
    let mut report = DissipationReport {
        intervals: 0,
        skipped: 0,
        failures: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_interval: None,
    };
    for w in records.windows(2) {
        report.intervals += 1;
        let (Some(f1), Some(f2)) = (w[0].lyapunov_f, w[1].lyapunov_f) else {
            report.skipped += 1;
            continue;
        };
        let increment = f2 - f1 + (w[1].cum_dissipation - w[0].cum_dissipation);
        let excess = increment - tol * (1.0 + f1.abs());
        if excess > 0.0 {
            report.failures += 1;
        }
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_interval = Some((w[0].t, w[1].t));
        }
    }
    Ok(report)
}

/// Smooth test function `φ(x, t)` for the weak formulation.
pub trait TestFunction {
    fn value(&self, x: f64, y: f64, t: f64) -> f64;
    fn time_derivative(&self, x: f64, y: f64, t: f64) -> f64;
    fn gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
}

/// Spatial factor of a [`BumpTestFunction`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialProfile {
    Constant,
    /// `cos(πx/L_x)`.
    CosX,
    /// `cos(πx/L_x) cos(πy/L_y)`.
    CosXY,
}

/// `φ(x, t) = S(x) ψ(t)` with the smooth cut-off
/// `ψ(t) = exp(1 − 1/(1 − (t/T)²))` on `[0, T)` and 0 afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpTestFunction {
    pub profile: SpatialProfile,
    pub horizon: f64,
    pub lengths: [f64; 2],
}

impl BumpTestFunction {
    pub fn new(profile: SpatialProfile, horizon: f64, lengths: [f64; 2]) -> Self {
        BumpTestFunction {
            profile,
            horizon,
            lengths,
        }
    }

    fn bump(&self, t: f64) -> (f64, f64) {
        let s = t / self.horizon;
        if !(s < 1.0) || s < 0.0 {
            return (0.0, 0.0);
        }
        let d = 1.0 - s * s;
        let psi = (1.0 - 1.0 / d).exp();
        let dpsi = -psi * 2.0 * s / (self.horizon * d * d);
        (psi, dpsi)
    }

    fn spatial(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let (kx, ky) = (PI / self.lengths[0], PI / self.lengths[1]);
        match self.profile {
            SpatialProfile::Constant => (1.0, [0.0, 0.0]),
            SpatialProfile::CosX => ((kx * x).cos(), [-kx * (kx * x).sin(), 0.0]),
            SpatialProfile::CosXY => {
                let (cx, cy) = ((kx * x).cos(), (ky * y).cos());
                (cx * cy, [-kx * (kx * x).sin() * cy, -ky * cx * (ky * y).sin()])
            }
        }
    }
}

impl TestFunction for BumpTestFunction {
    fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        self.spatial(x, y).0 * self.bump(t).0
    }
    fn time_derivative(&self, x: f64, y: f64, t: f64) -> f64 {
        self.spatial(x, y).0 * self.bump(t).1
    }
    fn gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let g = self.spatial(x, y).1;
        let psi = self.bump(t).0;
        [g[0] * psi, g[1] * psi]
    }
}

/// The zero test function.
pub struct ZeroTestFunction;

impl TestFunction for ZeroTestFunction {
    fn value(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn time_derivative(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn gradient(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// A stored `(t, u, v)` sample of a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectorySample {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakResidual {
    pub res_u: f64,
    pub res_v: f64,
}

/// Residuals of both integral identities of the weak formulation (with
/// `ε = 0`), using trapezoid weights between samples and midpoint/face
/// quadrature in space. `samples[0]` must be the initial datum at `t = 0`.
pub fn weak_residual(
    samples: &[TrajectorySample],
    params: &ModelParams,
    test_fn: &dyn TestFunction,
) -> Result<WeakResidual, DiagnosticsError> {
    let first = samples
        .first()
        .ok_or_else(|| DiagnosticsError::Config("no samples".into()))?;
    if first.t != 0.0 {
        return Err(DiagnosticsError::Config(format!(
            "first sample must be at t = 0, got {}",
            first.t
        )));
    }
    if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(DiagnosticsError::Config("sample times must increase".into()));
    }
    let grid = *first.u.grid();
    if samples.iter().any(|s| *s.u.grid() != grid || *s.v.grid() != grid) {
        return Err(DiagnosticsError::Config("samples live on different grids".into()));
    }
    let t_last = samples[samples.len() - 1].t;
    let nx = grid.cells()[0];
    let vanishes = (0..grid.len()).all(|k| {
        let (x, y) = grid.center(k % nx, k / nx);
        test_fn.value(x, y, t_last).abs() <= 1e-12
    });
    if !vanishes {
        return Err(DiagnosticsError::Config(format!(
            "test function does not vanish at the final sample time {t_last}"
        )));
    }

    let weights = trapezoid_weights(samples.iter().map(|s| s.t));
    let mut acc_u = -spatial_pairing(&first.u, test_fn, 0.0);
    let mut acc_v = -spatial_pairing(&first.v, test_fn, 0.0);
    for (s, w) in samples.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let (au, av) = weak_integrands(s, params, test_fn);
        acc_u += w * au;
        acc_v += w * av;
    }
    Ok(WeakResidual {
        res_u: acc_u.abs(),
        res_v: acc_v.abs(),
    })
}

fn trapezoid_weights(times: impl Iterator<Item = f64>) -> Vec<f64> {
    let t: Vec<f64> = times.collect();
    let n = t.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let half = 0.5 * (t[k + 1] - t[k]);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

/// `∫ f φ(·, t)`.
fn spatial_pairing(f: &Field, test_fn: &dyn TestFunction, t: f64) -> f64 {
    let grid = f.grid();
    let mut s = 0.0;
    for j in 0..grid.len() / grid.cells()[0] {
        for i in 0..grid.cells()[0] {
            let (x, y) = grid.center(i, j);
            s += f.values()[grid.index(i, j)] * test_fn.value(x, y, t);
        }
    }
    s * grid.cell_volume()
}

/// Space integrals of both weak identities at one sample time:
/// `−∫uφ_t + ∫∇u·∇φ − χ∫u∇v·∇φ − κ∫uφ + μ∫u²φ` and
/// `−∫vφ_t + ∫∇v·∇φ + ∫uvφ`. Gradient pairings live on interior faces.
fn weak_integrands(s: &TrajectorySample, params: &ModelParams, test_fn: &dyn TestFunction) -> (f64, f64) {
    let grid = s.u.grid();
    let (u, v) = (s.u.values(), s.v.values());
    let nx = grid.cells()[0];
    let ny = grid.len() / nx;
    let vol = grid.cell_volume();
    let (chi, kappa, mu) = (params.chi(), params.kappa(), params.mu());

    let mut cell_u = 0.0;
    let mut cell_v = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let (x, y) = grid.center(i, j);
            let phi = test_fn.value(x, y, s.t);
            let phi_t = test_fn.time_derivative(x, y, s.t);
            cell_u += -u[k] * phi_t - kappa * u[k] * phi + mu * u[k] * u[k] * phi;
            cell_v += -v[k] * phi_t + u[k] * v[k] * phi;
        }
    }

    let mut face_u = 0.0;
    let mut face_v = 0.0;
    for axis in 0..grid.dim() {
        let h = grid.spacing(axis);
        for j in 0..ny {
            for i in 0..nx {
                let (ir, jr) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
                if ir >= nx || jr >= ny {
                    continue;
                }
                let (l, r) = (grid.index(i, j), grid.index(ir, jr));
                let (mut x, mut y) = grid.center(i, j);
                if axis == 0 {
                    x += 0.5 * h;
                } else {
                    y += 0.5 * h;
                }
                let dphi = test_fn.gradient(x, y, s.t)[axis];
                let du = (u[r] - u[l]) / h;
                let dv = (v[r] - v[l]) / h;
                let u_face = 0.5 * (u[l] + u[r]);
                face_u += (du - chi * u_face * dv) * dphi;
                face_v += dv * dphi;
            }
        }
    }
    ((cell_u + face_u) * vol, (cell_v + face_v) * vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn unit_square(n: usize) -> GridSpec {
        GridSpec::rect(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn lyapunov_examples() {
        let grid = unit_square(8);
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let f = lyapunov_f(&Field::constant(grid, 1.0), &Field::zeros(grid), &p).unwrap();
        assert!((f - 1.0).abs() < 1e-14);

        let p = ModelParams::new(2.0, 3.0, 2.0, 0.1).unwrap();
        let eq = 1.5;
        let f = lyapunov_f(&Field::constant(grid, eq), &Field::zeros(grid), &p).unwrap();
        assert!((f - (eq - eq * eq.ln())).abs() < 1e-13);

        let u = Field::from_fn(grid, |x, y| 1.0 + x * y);
        let v = Field::from_fn(grid, |x, _| x);
        let base = lyapunov_f(&u, &v, &p).unwrap();
        let shifted = lyapunov_f(&u, &v.map(|x| x + 0.1), &p).unwrap();
        assert!(shifted > base);
    }

    #[test]
    fn lyapunov_errors() {
        let grid = GridSpec::line(5, 1.0).unwrap();
        let p = ModelParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let one = Field::constant(grid, 1.0);
        assert_eq!(
            lyapunov_f(&one, &one, &p),
            Err(DiagnosticsError::NotApplicable("lyapunov_F"))
        );
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let mut u = one.clone();
        u.values_mut()[2] = 0.0;
        assert_eq!(
            lyapunov_f(&u, &one, &p),
            Err(DiagnosticsError::Domain {
                functional: "lyapunov_F",
                cell: 2,
                value: 0.0
            })
        );
    }

    #[test]
    fn entropy_examples() {
        let grid = unit_square(6);
        let p = ModelParams::new(1.5, 1.0, 1.0, 0.0).unwrap();
        let e = entropy_energy(&Field::constant(grid, 1.0), &Field::constant(grid, 0.3), &p, 1e-12).unwrap();
        assert!(e.abs() < 1e-15);
        let e_val = std::f64::consts::E;
        let e = entropy_energy(&Field::constant(grid, e_val), &Field::constant(grid, 0.3), &p, 1e-12).unwrap();
        assert!((e - e_val).abs() < 1e-13);
        let zero_u = entropy_energy(&Field::zeros(grid), &Field::constant(grid, 1.0), &p, 1e-12).unwrap();
        assert_eq!(zero_u, 0.0);
        assert!(entropy_energy(&Field::zeros(grid), &Field::zeros(grid), &p, 0.0).is_err());
    }

    #[test]
    fn entropy_nonincreasing_in_floor() {
        let grid = GridSpec::line(32, 1.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let u = Field::from_fn(grid, |x, _| 1.0 + x);
        let v = Field::from_fn(grid, |x, _| (x - 0.5).powi(2) * 1e-3);
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let floor = 10f64.powi(-12 + k);
            let e = entropy_energy(&u, &v, &p, floor).unwrap();
            assert!(e <= last);
            last = e;
        }
    }

    #[test]
    fn coupled_functional_examples() {
        let grid = unit_square(5);
        let c = Field::constant(grid, 3.0);
        let r = coupled_functional(&Field::zeros(grid), &c, 2.0, 1.0).unwrap();
        assert_eq!(r.unweighted, 0.0);
        let r = coupled_functional(&Field::constant(grid, 2.0), &c, 2.0, 1.0).unwrap();
        assert!((r.unweighted - 4.0).abs() < 1e-13);

        let u = Field::from_fn(grid, |x, y| x + y);
        let v = Field::from_fn(grid, |x, y| x * x - y);
        let a = coupled_functional(&u, &v, 3.0, 2.0).unwrap();
        let b = coupled_functional(&u.map(|x| 2.0 * x), &v, 3.0, 2.0).unwrap();
        let grad_part = a.unweighted - coupled_functional(&u, &Field::zeros(grid), 3.0, 2.0).unwrap().unweighted;
        assert!(((b.unweighted - grad_part) - 8.0 * (a.unweighted - grad_part)).abs() < 1e-12);
        assert!((a.weighted - (a.unweighted - grad_part + 64.0 * grad_part)).abs() < 1e-9);
        assert!(coupled_functional(&u, &v, 0.5, 1.0).is_err());
    }

    #[test]
    fn interpolation_constant_is_degenerate() {
        let r = check_interpolation_inequality(&Field::constant(unit_square(7), 2.0), 1.0, 2).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn interpolation_ratio_refines_to_analytic_value() {
        let ratio = |n: usize| {
            let c = Field::from_fn(GridSpec::line(n, 1.0).unwrap(), |x, _| 2.0 + (PI * x).cos());
            check_interpolation_inequality(&c, 1.0, 1).unwrap().ratio.unwrap()
        };
        let errs: Vec<f64> = [64, 128, 256, 512].iter().map(|&n| (ratio(n) - 120.0).abs()).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(errs[3] < 0.02 * 120.0);
    }

    #[test]
    fn hessian_inequality_examples() {
        let line = GridSpec::line(40, 1.0).unwrap();
        let c = Field::from_fn(line, |x, _| (3.0 * x).sin() + x.powi(5));
        assert_eq!(check_hessian_inequality(&c, 1).max_violation, 0.0);

        let grid = unit_square(12);
        let saddle = Field::from_fn(grid, |x, y| x * x - y * y);
        assert_eq!(check_hessian_inequality(&saddle, 2).max_violation, 0.0);
    }

    #[test]
    fn hessian_inequality_brute_force_stencil_tuples() {
        // The inequality is algebraic in the stencil values: (a + b)² ≤ 2(a² + b² + 2m²).
        let mut state = 0x2545_F491_4F6C_DD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let grid = GridSpec::rect(9, 7, 1.0, 1.3).unwrap();
        for _ in 0..200 {
            let coeffs: Vec<f64> = (0..6).map(|_| next()).collect();
            let c = Field::from_fn(grid, |x, y| {
                coeffs[0] * (3.0 * x).sin() + coeffs[1] * (2.0 * y).cos() + coeffs[2] * x * y
                    + coeffs[3] * x * x * y
                    + coeffs[4] * (x + y).exp()
                    + coeffs[5]
            });
            let hmax = grid::norm_inf(&grid::hessian_frobenius_sq(&c));
            assert!(check_hessian_inequality(&c, 2).max_violation <= 1e-10 * hmax);
        }
    }

    fn record(t: f64, f: Option<f64>, cum: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 1.0,
            u_sup: 1.0,
            v_sup: 0.0,
            grad_v_l2sq: 0.0,
            y_p: 1.0,
            lyapunov_f: f,
            entropy_e: 0.0,
            u_dist_l2: Some(0.0),
            v_lp: 0.0,
            cum_dissipation: cum,
        }
    }

    #[test]
    fn dissipation_check_on_equilibrium_and_violations() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let flat: Vec<_> = (0..5).map(|k| record(k as f64, Some(1.0), 0.0)).collect();
        let r = dissipation_check(&flat, &p, 0.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_excess, 0.0);

        let bad = vec![record(0.0, Some(1.0), 0.0), record(1.0, Some(0.9), 0.2), record(2.0, Some(0.5), 0.3)];
        let r = dissipation_check(&bad, &p, 1e-4).unwrap();
        assert_eq!(r.failures, 1);
        assert_eq!(r.worst_interval, Some((0.0, 1.0)));

        let gap = vec![record(0.0, Some(1.0), 0.0), record(1.0, None, 0.0)];
        assert!(!dissipation_check(&gap, &p, 1e-4).unwrap().passed());
        let unordered = vec![record(1.0, Some(1.0), 0.0), record(0.0, Some(1.0), 0.0)];
        assert!(dissipation_check(&unordered, &p, 1e-4).is_err());
        let p0 = ModelParams::new(1.0, -1.0, 1.0, 0.0).unwrap();
        assert!(dissipation_check(&flat, &p0, 1e-4).is_err());
    }

    #[test]
    fn bump_test_function_derivatives() {
        let phi = BumpTestFunction::new(SpatialProfile::CosXY, 2.0, [1.0, 1.5]);
        let (x, y) = (0.3, 0.7);
        for t in [0.0, 0.4, 1.1, 1.9] {
            let h = 1e-6;
            let fd_t = if t == 0.0 {
                (phi.value(x, y, t + h) - phi.value(x, y, t)) / h
            } else {
                (phi.value(x, y, t + h) - phi.value(x, y, t - h)) / (2.0 * h)
            };
            assert!((fd_t - phi.time_derivative(x, y, t)).abs() < 1e-5);
            let g = phi.gradient(x, y, t);
            let fd_x = (phi.value(x + h, y, t) - phi.value(x - h, y, t)) / (2.0 * h);
            let fd_y = (phi.value(x, y + h, t) - phi.value(x, y - h, t)) / (2.0 * h);
            assert!((fd_x - g[0]).abs() < 1e-6);
            assert!((fd_y - g[1]).abs() < 1e-6);
        }
        assert_eq!(phi.value(x, y, 2.0), 0.0);
        assert_eq!(phi.value(x, y, 5.0), 0.0);
        assert!((phi.value(0.0, 0.0, 0.0) - 1.0).abs() < 1e-15);
    }

    fn equilibrium_samples(grid: GridSpec, eq: f64, horizon: f64, steps: usize) -> Vec<TrajectorySample> {
        (0..=steps)
            .map(|k| TrajectorySample {
                t: horizon * k as f64 / steps as f64,
                u: Field::constant(grid, eq),
                v: Field::zeros(grid),
            })
            .collect()
    }

    #[test]
    fn weak_residual_zero_test_function() {
        let grid = GridSpec::line(10, 1.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let samples: Vec<_> = (0..5)
            .map(|k| TrajectorySample {
                t: k as f64 * 0.1,
                u: Field::from_fn(grid, |x, _| 1.0 + x * k as f64),
                v: Field::from_fn(grid, |x, _| 2.0 - x),
            })
            .collect();
        let r = weak_residual(&samples, &p, &ZeroTestFunction).unwrap();
        assert_eq!(r, WeakResidual { res_u: 0.0, res_v: 0.0 });
    }

    #[test]
    fn weak_residual_vanishes_on_equilibrium() {
        let grid = GridSpec::rect(8, 8, 1.0, 1.0).unwrap();
        let p = ModelParams::new(1.0, 2.0, 4.0, 0.0).unwrap();
        let samples = equilibrium_samples(grid, 0.5, 1.0, 2000);
        let phi = BumpTestFunction::new(SpatialProfile::Constant, 1.0, [1.0, 1.0]);
        let r = weak_residual(&samples, &p, &phi).unwrap();
        // Only the time quadrature of ∫ψ' = −ψ(0) is inexact.
        assert!(r.res_u < 1e-6, "{r:?}");
        assert_eq!(r.res_v, 0.0);
    }

    #[test]
    fn weak_residual_rejects_bad_input() {
        let grid = GridSpec::line(6, 1.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let samples = equilibrium_samples(grid, 1.0, 1.0, 10);
        let long = BumpTestFunction::new(SpatialProfile::CosX, 2.0, [1.0, 1.0]);
        assert!(matches!(weak_residual(&samples, &p, &long), Err(DiagnosticsError::Config(_))));
        assert!(weak_residual(&samples[1..], &p, &ZeroTestFunction).is_err());
        assert!(weak_residual(&[], &p, &ZeroTestFunction).is_err());
    }
}
