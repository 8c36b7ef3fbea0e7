//! Manufactured solution for scheme verification.
//!
//! ```text
//! u* = e^{-t} (2 + cos(k_x x) cos(k_y y))     (the y factor only in 2D)
//! v* = e^{-t} (2 + cos(k_x x)) / 2
//! ```
//!
//! with `k = π/L`, so both satisfy the Neumann condition and stay positive.
//! The forcing is the exact residual of the PDE at `(u*, v*)`.

use std::f64::consts::PI;

use crate::grid::{Field, GridSpec};
use crate::model::{reaction_nonneg, ModelParams};
use crate::stepper::Forcing;

#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    pub params: ModelParams,
    kx: f64,
    ky: f64,
    two_d: bool,
}

struct Point {
    u: f64,
    u_t: f64,
    u_grad: [f64; 2],
    u_lap: f64,
    v: f64,
    v_t: f64,
    v_x: f64,
    v_xx: f64,
}

impl ManufacturedSolution {
    pub fn new(params: ModelParams, grid: &GridSpec) -> Self {
        let lengths = grid.lengths();
        ManufacturedSolution {
            params,
            kx: PI / lengths[0],
            ky: if grid.dim() == 2 { PI / lengths[1] } else { 0.0 },
            two_d: grid.dim() == 2,
        }
    }

    fn point(&self, x: f64, y: f64, t: f64) -> Point {
        let decay = (-t).exp();
        let (cx, sx) = ((self.kx * x).cos(), (self.kx * x).sin());
        let (cy, sy) = if self.two_d {
            ((self.ky * y).cos(), (self.ky * y).sin())
        } else {
            (1.0, 0.0)
        };
        let u = decay * (2.0 + cx * cy);
        let v = decay * (2.0 + cx) / 2.0;
        Point {
            u,
            u_t: -u,
            u_grad: [-decay * self.kx * sx * cy, -decay * self.ky * cx * sy],
            u_lap: -decay * (self.kx * self.kx + self.ky * self.ky) * cx * cy,
            v,
            v_t: -v,
            v_x: -decay * self.kx * sx / 2.0,
            v_xx: -decay * self.kx * self.kx * cx / 2.0,
        }
    }

    pub fn exact_u(&self, x: f64, y: f64, t: f64) -> f64 {
        self.point(x, y, t).u
    }

    pub fn exact_v(&self, x: f64, y: f64, t: f64) -> f64 {
        self.point(x, y, t).v
    }

    /// `u*_t − Δu* + χ∇·(u*∇v*) − f(u*)`.
    pub fn forcing_u(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = self.point(x, y, t);
        let taxis = p.u_grad[0] * p.v_x + p.u * p.v_xx;
        p.u_t - p.u_lap + self.params.chi() * taxis - reaction_nonneg(p.u, &self.params)
    }

    /// `v*_t − Δv* + u*v*`.
    pub fn forcing_v(&self, x: f64, y: f64, t: f64) -> f64 {
        let p = self.point(x, y, t);
        p.v_t - p.v_xx + p.u * p.v
    }

    pub fn sample_u(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x, y| self.exact_u(x, y, t))
    }

    pub fn sample_v(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x, y| self.exact_v(x, y, t))
    }
}

impl Forcing for ManufacturedSolution {
    fn sources(&self, like: &Field, t: f64) -> (Field, Field) {
        let grid = *like.grid();
        (
            Field::from_fn(grid, |x, y| self.forcing_u(x, y, t)),
            Field::from_fn(grid, |x, y| self.forcing_v(x, y, t)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of the exact pair, independent of the
    /// hand-derived derivative formulas.
    fn fd_residuals(m: &ManufacturedSolution, x: f64, y: f64, t: f64) -> (f64, f64) {
        let h = 1e-4;
        let u = |x: f64, y: f64, t: f64| m.exact_u(x, y, t);
        let v = |x: f64, y: f64, t: f64| m.exact_v(x, y, t);
        let dt = |f: &dyn Fn(f64, f64, f64) -> f64| (f(x, y, t + h) - f(x, y, t - h)) / (2.0 * h);
        let lap = |f: &dyn Fn(f64, f64, f64) -> f64| {
            (f(x + h, y, t) - 2.0 * f(x, y, t) + f(x - h, y, t)) / (h * h)
                + (f(x, y + h, t) - 2.0 * f(x, y, t) + f(x, y - h, t)) / (h * h)
        };
        // ∇·(u∇v) via fluxes at half points
        let flux_x = |xs: f64| {
            let um = 0.5 * (u(xs - h / 2.0, y, t) + u(xs + h / 2.0, y, t));
            um * (v(xs + h / 2.0, y, t) - v(xs - h / 2.0, y, t)) / h
        };
        let flux_y = |ys: f64| {
            let um = 0.5 * (u(x, ys - h / 2.0, t) + u(x, ys + h / 2.0, t));
            um * (v(x, ys + h / 2.0, t) - v(x, ys - h / 2.0, t)) / h
        };
        let div = (flux_x(x + h / 2.0) - flux_x(x - h / 2.0)) / h + (flux_y(y + h / 2.0) - flux_y(y - h / 2.0)) / h;
        let p = &m.params;
        let uu = u(x, y, t);
        let react = p.kappa() * uu - p.mu() * uu * uu - p.eps() * uu * uu * (p.a() * uu).ln();
        let ru = dt(&u) - lap(&u) + p.chi() * div - react;
        let rv = dt(&v) - lap(&v) + uu * v(x, y, t);
        (ru, rv)
    }

    #[test]
    fn forcing_matches_finite_differences() {
        let params = ModelParams::new(1.3, 0.7, 1.1, 0.2).unwrap();
        for grid in [GridSpec::line(10, 1.0).unwrap(), GridSpec::rect(10, 10, 1.0, 2.0).unwrap()] {
            let m = ManufacturedSolution::new(params, &grid);
            for &(x, y, t) in &[(0.1, 0.3, 0.0), (0.45, 1.2, 0.7), (0.9, 0.05, 2.0)] {
                let (ru, rv) = fd_residuals(&m, x, y, t);
                assert!((ru - m.forcing_u(x, y, t)).abs() < 1e-5, "{ru} vs {}", m.forcing_u(x, y, t));
                assert!((rv - m.forcing_v(x, y, t)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn exact_pair_is_positive_with_zero_normal_derivative() {
        let params = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let grid = GridSpec::rect(4, 4, 1.0, 1.0).unwrap();
        let m = ManufacturedSolution::new(params, &grid);
        let h = 1e-6;
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            assert!(m.exact_u(s, 1.0 - s, 0.3) > 0.0);
            assert!(m.exact_v(s, s, 0.3) > 0.0);
            assert!(((m.exact_u(h, s, 0.1) - m.exact_u(0.0, s, 0.1)) / h).abs() < 1e-5);
            assert!(((m.exact_u(s, 1.0, 0.1) - m.exact_u(s, 1.0 - h, 0.1)) / h).abs() < 1e-5);
            assert!(((m.exact_v(1.0, s, 0.1) - m.exact_v(1.0 - h, s, 0.1)) / h).abs() < 1e-5);
        }
    }
}
