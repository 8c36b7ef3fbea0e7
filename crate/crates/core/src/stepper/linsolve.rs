//! Jacobi-preconditioned conjugate gradients for `(I − dtΔ + dt·c) w = b`.
//!
//! The operator is applied matrix-free on top of the Neumann Laplacian. It
//! is symmetric positive definite and an M-matrix for `c ≥ 0`.

use thiserror::Error;

use crate::grid::{laplacian_into, Field, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolverSettings {
    /// Relative residual target `‖Aw − b‖₂ ≤ tol ‖b‖₂`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolverSettings {
    fn default() -> Self {
        LinearSolverSettings {
            tol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("CG did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("non-finite value in linear solve")]
    NonFinite,
    #[error("shift coefficient must be nonnegative (cell {cell}: {value})")]
    NegativeCoefficient { cell: usize, value: f64 },
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub solution: Field,
    pub iterations: usize,
    pub relative_residual: f64,
}

struct ShiftedLaplacian<'a> {
    grid: GridSpec,
    dt: f64,
    coeff: Option<&'a [f64]>,
    lap: Vec<f64>,
}

impl ShiftedLaplacian<'_> {
    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        laplacian_into(x, &self.grid, &mut self.lap);
        for k in 0..x.len() {
            let shift = self.coeff.map_or(0.0, |c| c[k]);
            out[k] = x[k] - self.dt * self.lap[k] + self.dt * shift * x[k];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let nx = g.cells()[0];
        (0..g.len())
            .map(|k| {
                let mut d = 1.0;
                for axis in 0..g.dim() {
                    let (pos, n) = if axis == 0 {
                        (k % nx, nx)
                    } else {
                        (k / nx, g.cells()[1])
                    };
                    let h = g.spacing(axis);
                    let links = (pos > 0) as usize + (pos + 1 < n) as usize;
                    d += self.dt * links as f64 / (h * h);
                }
                d + self.dt * self.coeff.map_or(0.0, |c| c[k])
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I − dtΔ + dt·coeff) w = rhs`.
///
/// The start vector `rhs / (1 + dt·coeff)` is exact for spatially uniform
/// data. When `rhs ≥ 0` the exact solution is nonnegative, so negative
/// entries left by the iteration (solver-tolerance sized) are set to 0.
pub fn solve_shifted_laplacian(
    rhs: &Field,
    coeff: Option<&Field>,
    dt: f64,
    settings: &LinearSolverSettings,
) -> Result<LinearSolution, LinearSolveError> {
    let grid = *rhs.grid();
    let b = rhs.values();
    let coeff_vals = coeff.map(|c| c.values());
    if let Some(c) = coeff_vals {
        if let Some((cell, &value)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(LinearSolveError::NegativeCoefficient { cell, value });
        }
    }
    let mut op = ShiftedLaplacian {
        grid,
        dt,
        coeff: coeff_vals,
        lap: vec![0.0; grid.len()],
    };
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if !b_norm.is_finite() {
        return Err(LinearSolveError::NonFinite);
    }
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            solution: Field::zeros(grid),
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut x: Vec<f64> = (0..n)
        .map(|k| b[k] / (1.0 + dt * coeff_vals.map_or(0.0, |c| c[k])))
        .collect();
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let target = settings.tol * b_norm;
    let mut r_norm = dot(&r, &r).sqrt();
    let mut iterations = 0;

    if r_norm > target {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        while r_norm > target {
            if iterations >= settings.max_iter {
                return Err(LinearSolveError::NotConverged {
                    residual: r_norm / b_norm,
                    iterations,
                });
            }
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) || !pap.is_finite() {
                return Err(LinearSolveError::NonFinite);
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            r_norm = dot(&r, &r).sqrt();
            iterations += 1;
            if !r_norm.is_finite() {
                return Err(LinearSolveError::NonFinite);
            }
        }
    }

    if b.iter().all(|&v| v >= 0.0) {
        for xi in &mut x {
            if *xi < 0.0 {
                *xi = 0.0;
            }
        }
    }
    Ok(LinearSolution {
        solution: Field::new(grid, x).expect("solution has grid size"),
        iterations,
        relative_residual: r_norm / b_norm,
    })
}
