//! Model coefficients, the regularized logistic source and the explicit
//! constants of the large-`μ` boundedness condition.

use thiserror::Error;

use crate::grid::{Field, GridError};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("reaction evaluated at negative density {0}")]
    NegativeDensity(f64),
    #[error("k-constants need p > 1, got {0}")]
    ExponentDomain(f64),
    #[error("dimension N must be at least 1")]
    ZeroDimension,
    #[error("initial {field} must be strictly positive; cell {cell} holds {value}")]
    NonPositiveInitial {
        field: &'static str,
        cell: usize,
        value: f64,
    },
    #[error("initial data: {0}")]
    Grid(String),
}

impl From<GridError> for ModelError {
    fn from(e: GridError) -> Self {
        ModelError::Grid(e.to_string())
    }
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> ModelError {
    ModelError::InvalidParameter {
        name,
        value,
        reason,
    }
}

/// `a = μ/κ` for `κ > 0`, `a = μ` otherwise.
pub fn compute_a(kappa: f64, mu: f64) -> Result<f64, ModelError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid("mu", mu, "must be positive"));
    }
    if !kappa.is_finite() {
        return Err(invalid("kappa", kappa, "must be finite"));
    }
    Ok(if kappa > 0.0 { mu / kappa } else { mu })
}

/// Coefficients of the regularized system. `a` is always derived.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    chi: f64,
    kappa: f64,
    mu: f64,
    eps: f64,
    a: f64,
    relaxed: bool,
}

impl ModelParams {
    /// Validated parameters: `χ > 0`, `μ > 0`, `ε ∈ [0, 1)`.
    pub fn new(chi: f64, kappa: f64, mu: f64, eps: f64) -> Result<Self, ModelError> {
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(invalid("chi", chi, "must be positive"));
        }
        check_eps(eps)?;
        let a = compute_a(kappa, mu)?;
        Ok(ModelParams {
            chi,
            kappa,
            mu,
            eps,
            a,
            relaxed: false,
        })
    }

    /// Test mode admitting `χ = 0` and/or `μ = 0` (pure diffusion, linear
    /// growth). Scenario drivers refuse such parameters.
    ///
    /// With `μ = 0` the log term has no natural `a`; it is set to 1.
    pub fn relaxed(chi: f64, kappa: f64, mu: f64, eps: f64) -> Result<Self, ModelError> {
        if !(chi >= 0.0) || !chi.is_finite() {
            return Err(invalid("chi", chi, "must be nonnegative"));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid("mu", mu, "must be nonnegative"));
        }
        if !kappa.is_finite() {
            return Err(invalid("kappa", kappa, "must be finite"));
        }
        check_eps(eps)?;
        let a = if mu > 0.0 { compute_a(kappa, mu)? } else { 1.0 };
        Ok(ModelParams {
            chi,
            kappa,
            mu,
            eps,
            a,
            relaxed: chi == 0.0 || mu == 0.0,
        })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn a(&self) -> f64 {
        self.a
    }

    /// True when built in relaxed test mode with a zero coefficient.
    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    /// Copy with a different `ε`.
    pub fn with_eps(&self, eps: f64) -> Result<Self, ModelError> {
        check_eps(eps)?;
        Ok(ModelParams { eps, ..*self })
    }

    /// Copy with different `χ`, keeping the other coefficients.
    pub fn with_chi(&self, chi: f64) -> Result<Self, ModelError> {
        if self.relaxed {
            Self::relaxed(chi, self.kappa, self.mu, self.eps)
        } else {
            Self::new(chi, self.kappa, self.mu, self.eps)
        }
    }

    /// Copy with a different `μ` (and hence possibly a different `a`).
    pub fn with_mu(&self, mu: f64) -> Result<Self, ModelError> {
        if self.relaxed {
            Self::relaxed(self.chi, self.kappa, mu, self.eps)
        } else {
            Self::new(self.chi, self.kappa, mu, self.eps)
        }
    }

    /// Homogeneous equilibrium density `κ/μ`, when `κ > 0`.
    pub fn equilibrium(&self) -> Option<f64> {
        (self.kappa > 0.0 && self.mu > 0.0).then(|| self.kappa / self.mu)
    }
}

fn check_eps(eps: f64) -> Result<(), ModelError> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(invalid("eps", eps, "must lie in [0, 1)"))
    }
}

/// Source term `κu − μu² − εu² ln(au)`, continuously extended by 0 at `u = 0`.
pub fn reaction(u: f64, params: &ModelParams) -> Result<f64, ModelError> {
    if u < 0.0 {
        return Err(ModelError::NegativeDensity(u));
    }
    Ok(reaction_nonneg(u, params))
}

#[inline]
pub(crate) fn reaction_nonneg(u: f64, p: &ModelParams) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let mut r = p.kappa * u - p.mu * u * u;
    if p.eps > 0.0 {
        r -= p.eps * u * u * (p.a * u).ln();
    }
    r
}

/// The two constants `(k1(p,N), k2(p,N))` of the boundedness condition.
pub fn k_constants(p: f64, n: u32) -> Result<(f64, f64), ModelError> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(ModelError::ExponentDomain(p));
    }
    if n == 0 {
        return Err(ModelError::ZeroDimension);
    }
    let n = n as f64;
    let q = 4.0 * p * p + n;
    let k1 = p * (p - 1.0) / (p + 1.0) * (4.0 * (p - 1.0) * q / (p + 1.0)).powf(1.0 / p);
    let k2 = 4.0 * (p + n - 1.0) / (p + 1.0)
        * (8.0 * (p - 1.0) * (p + n - 1.0) * q / (p + 1.0)).powf((p - 1.0) / 2.0);
    Ok((k1, k2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionReport {
    pub satisfied: bool,
    pub threshold: f64,
    pub p: f64,
}

/// `μ ≥ k1(p,N)·(χ‖v0‖∞)^(2/p) + k2(p,N)·(χ‖v0‖∞)^(2p)`.
pub fn check_mu_condition(
    params: &ModelParams,
    v0_sup: f64,
    p: f64,
    n: u32,
) -> Result<ConditionReport, ModelError> {
    if !(v0_sup >= 0.0) {
        return Err(invalid("v0_sup", v0_sup, "must be nonnegative"));
    }
    let threshold = mu_threshold(params.chi * v0_sup, p, n)?;
    Ok(ConditionReport {
        satisfied: params.mu >= threshold,
        threshold,
        p,
    })
}

/// Threshold as a function of `s = χ‖v0‖∞`.
pub fn mu_threshold(chi_v0_sup: f64, p: f64, n: u32) -> Result<f64, ModelError> {
    let (k1, k2) = k_constants(p, n)?;
    let s = chi_v0_sup;
    Ok(k1 * s.powf(2.0 / p) + k2 * s.powf(2.0 * p))
}

/// The scan grid `{N + 1/4, N + 1/2, …, 3N}`.
pub fn p_scan_grid(n: u32) -> Vec<f64> {
    let n = n as f64;
    let steps = ((3.0 * n - n) / 0.25).round() as usize;
    (1..=steps).map(|k| n + 0.25 * k as f64).collect()
}

/// Least threshold over [`p_scan_grid`]; ties keep the smallest `p`.
pub fn least_threshold(params: &ModelParams, v0_sup: f64, n: u32) -> Result<ConditionReport, ModelError> {
    let mut best: Option<ConditionReport> = None;
    for p in p_scan_grid(n) {
        let r = check_mu_condition(params, v0_sup, p, n)?;
        if best.map_or(true, |b| r.threshold < b.threshold) {
            best = Some(r);
        }
    }
    best.ok_or(ModelError::ZeroDimension)
}

/// The variant printed in the main existence theorem,
/// `k1(N,N)·(χ‖v0‖∞)^(1/N) + k2(N,N)·(χ‖v0‖∞)^(2N)`. For `N = 1` the
/// k-constants are taken at their `p → 1⁺` limit.
pub fn theorem_variant_threshold(chi_v0_sup: f64, n: u32) -> Result<f64, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroDimension);
    }
    let (k1, k2) = if n == 1 {
        (0.0, 2.0)
    } else {
        k_constants(n as f64, n)?
    };
    let nf = n as f64;
    Ok(k1 * chi_v0_sup.powf(1.0 / nf) + k2 * chi_v0_sup.powf(2.0 * nf))
}

/// Upper bound `m_ε` for `∫u` along the whole trajectory.
pub fn mass_bound(params: &ModelParams, omega_measure: f64, u0_mass: f64) -> f64 {
    let (kappa, mu, eps, a) = (params.kappa, params.mu, params.eps, params.a);
    let half = omega_measure / (2.0 * mu);
    let kappa_plus = kappa.max(0.0);
    let ode_bound = kappa * half
        + ((kappa_plus * half).powi(2) + eps * omega_measure / (2.0 * a * a * std::f64::consts::E * mu)).sqrt();
    ode_bound.max(u0_mass)
}

/// Initial pair `(u0, v0)`, strictly positive on a common grid.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub u0: Field,
    pub v0: Field,
}

impl InitialData {
    pub fn new(u0: Field, v0: Field) -> Result<Self, ModelError> {
        u0.same_grid(&v0)?;
        for (field, f) in [("u0", &u0), ("v0", &v0)] {
            if let Some((cell, &value)) = f.values().iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
                return Err(ModelError::NonPositiveInitial { field, cell, value });
            }
        }
        Ok(InitialData { u0, v0 })
    }
}
