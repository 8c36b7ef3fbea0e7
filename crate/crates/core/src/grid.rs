//! Structured box grids, cell-centered scalar fields and the discrete
//! differential operators used by the solver.
//!
//! All operators realize homogeneous Neumann conditions through mirror
//! ghost cells: the ghost value beyond a boundary face equals the adjacent
//! interior value, so every boundary face carries zero flux.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: need at least 3 cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: length must be positive and finite, got {length}")]
    Length { axis: usize, length: f64 },
    #[error("field has {got} values, grid needs {expected}")]
    Size { expected: usize, got: usize },
    #[error("fields live on different grids")]
    Mismatch,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box `[0, L_x] (x [0, L_y])` split into uniform cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    cells: [usize; 2],
    lengths: [f64; 2],
}

impl GridSpec {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self, GridError> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if lengths.len() != dim {
            return Err(GridError::Dimension(lengths.len()));
        }
        let mut spec = GridSpec {
            dim,
            cells: [1, 1],
            lengths: [1.0, 1.0],
        };
        for axis in 0..dim {
            if cells[axis] < 3 {
                return Err(GridError::TooFewCells {
                    axis,
                    cells: cells[axis],
                });
            }
            let length = lengths[axis];
            if !(length.is_finite() && length > 0.0) {
                return Err(GridError::Length { axis, length });
            }
            spec.cells[axis] = cells[axis];
            spec.lengths[axis] = length;
        }
        Ok(spec)
    }

    pub fn line(cells: usize, length: f64) -> Result<Self, GridError> {
        Self::new(&[cells], &[length])
    }

    pub fn rect(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        Self::new(&[nx, ny], &[lx, ly])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume of one cell, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    /// Center of cell `(i, j)`; `y` is 0 on 1D grids.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let x = (i as f64 + 0.5) * self.spacing(0);
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing(1)
        } else {
            0.0
        };
        (x, y)
    }

    /// Stride and extent of `axis` in the flat value array.
    fn axis_layout(&self, axis: usize) -> (usize, usize) {
        match axis {
            0 => (1, self.cells[0]),
            _ => (self.cells[0], self.cells[1]),
        }
    }

    /// Position of flat index `k` along `axis`.
    fn coord(&self, k: usize, axis: usize) -> usize {
        match axis {
            0 => k % self.cells[0],
            _ => k / self.cells[0],
        }
    }
}

/// Scalar data at cell centers, x-fastest (row-major with rows along y).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Size {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.cells[1] {
            for i in 0..grid.cells[0] {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Field { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn same_grid(&self, other: &Field) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }

    /// Writes the snapshot format: a header line `dim nx [ny] lx [ly]`
    /// followed by one value per line in storage order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        out.write_all(snapshot_header(&self.grid).as_bytes())?;
        let mut buf = String::with_capacity(self.values.len() * 24);
        for v in &self.values {
            writeln!(buf, "{v:?}").expect("writing to a String");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Field, GridError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| GridError::Snapshot("empty file".into()))??;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let bad = |what: &str| GridError::Snapshot(format!("bad header {header:?}: {what}"));
        let dim: usize = tokens
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("dimension"))?;
        if !(1..=2).contains(&dim) || tokens.len() != 1 + 2 * dim {
            return Err(bad("expected `dim nx [ny] lx [ly]`"));
        }
        let cells = tokens[1..=dim]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("cell count"))?;
        let lengths = tokens[1 + dim..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("length"))?;
        let grid = GridSpec::new(&cells, &lengths)?;
        let mut values = Vec::with_capacity(grid.len());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                GridError::Snapshot(format!("line {}: not a number: {line:?}", lineno + 2))
            })?;
            values.push(v);
        }
        Field::new(grid, values)
    }
}

fn snapshot_header(grid: &GridSpec) -> String {
    let mut s = format!("{}", grid.dim);
    for n in grid.cells() {
        write!(s, " {n}").unwrap();
    }
    for l in grid.lengths() {
        write!(s, " {l}").unwrap();
    }
    s.push('\n');
    s
}

/// Face reconstruction of `u` in the taxis flux.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TaxisScheme {
    /// `u` taken from the upstream side of the face (sign of the face
    /// gradient of `v`); keeps the explicit update positivity-friendly.
    #[default]
    Upwind,
    /// Arithmetic mean of the two neighbours; second order.
    Central,
}

#[inline]
fn neighbours(pos: usize, n: usize) -> (usize, usize) {
    let lo = if pos == 0 { 0 } else { 1 };
    let hi = if pos + 1 == n { 0 } else { 1 };
    (lo, hi)
}

/// Second difference along one axis with mirror ghosts.
#[inline]
fn second_difference(values: &[f64], grid: &GridSpec, k: usize, axis: usize) -> f64 {
    let (stride, n) = grid.axis_layout(axis);
    let h = grid.spacing(axis);
    let (lo, hi) = neighbours(grid.coord(k, axis), n);
    let left = values[k - lo * stride];
    let right = values[k + hi * stride];
    (right - 2.0 * values[k] + left) / (h * h)
}

/// Discrete Neumann Laplacian (3-point in 1D, 5-point in 2D).
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid;
    let mut out = vec![0.0; grid.len()];
    laplacian_into(&f.values, &grid, &mut out);
    Field { grid, values: out }
}

pub(crate) fn laplacian_into(values: &[f64], grid: &GridSpec, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for axis in 0..grid.dim {
            acc += second_difference(values, grid, k, axis);
        }
        *o = acc;
    }
}

/// Centered differences in the interior; the normal component is zero on
/// boundary cells.
pub fn gradient(f: &Field) -> Vec<Field> {
    let grid = f.grid;
    (0..grid.dim)
        .map(|axis| {
            let (stride, n) = grid.axis_layout(axis);
            let h = grid.spacing(axis);
            let values = (0..grid.len())
                .map(|k| {
                    let pos = grid.coord(k, axis);
                    if pos == 0 || pos + 1 == n {
                        0.0
                    } else {
                        (f.values[k + stride] - f.values[k - stride]) / (2.0 * h)
                    }
                })
                .collect();
            Field { grid, values }
        })
        .collect()
}

/// `|∇f|²` at cell centers.
pub fn gradient_norm_sq(f: &Field) -> Field {
    let grads = gradient(f);
    let mut out = Field::zeros(f.grid);
    for g in &grads {
        for (o, v) in out.values.iter_mut().zip(&g.values) {
            *o += v * v;
        }
    }
    out
}

/// `∇·(χ u ∇v)` in conservative face-flux form with zero flux through the
/// boundary.
pub fn chemotaxis_divergence(u: &Field, v: &Field, chi: f64, scheme: TaxisScheme) -> Field {
    debug_assert_eq!(u.grid, v.grid);
    let grid = u.grid;
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim {
        let (stride, n) = grid.axis_layout(axis);
        let h = grid.spacing(axis);
        for (k, o) in out.iter_mut().enumerate() {
            let pos = grid.coord(k, axis);
            let mut div = 0.0;
            if pos + 1 < n {
                div += face_flux(u, v, k, k + stride, h, chi, scheme);
            }
            if pos > 0 {
                div -= face_flux(u, v, k - stride, k, h, chi, scheme);
            }
            *o += div / h;
        }
    }
    Field { grid, values: out }
}

/// Flux `χ u_face (v_right - v_left)/h` through the face between `left`
/// and `right`.
#[inline]
fn face_flux(u: &Field, v: &Field, left: usize, right: usize, h: f64, chi: f64, scheme: TaxisScheme) -> f64 {
    let g = (v.values[right] - v.values[left]) / h;
    let u_face = match scheme {
        TaxisScheme::Upwind => {
            if g > 0.0 {
                u.values[left]
            } else {
                u.values[right]
            }
        }
        TaxisScheme::Central => 0.5 * (u.values[left] + u.values[right]),
    };
    chi * u_face * g
}

/// Pointwise `Σ_ij (∂_ij f)²`. Pure second derivatives reuse the Laplacian
/// stencil; the mixed derivative is the iterated central difference with
/// mirror ghosts.
pub fn hessian_frobenius_sq(f: &Field) -> Field {
    let grid = f.grid;
    let values = (0..grid.len())
        .map(|k| {
            let mut acc = 0.0;
            for axis in 0..grid.dim {
                let d2 = second_difference(&f.values, &grid, k, axis);
                acc += d2 * d2;
            }
            if grid.dim == 2 {
                let dxy = mixed_difference(&f.values, &grid, k);
                acc += 2.0 * dxy * dxy;
            }
            acc
        })
        .collect();
    Field { grid, values }
}

fn mixed_difference(values: &[f64], grid: &GridSpec, k: usize) -> f64 {
    let (nx, ny) = (grid.cells[0], grid.cells[1]);
    let (i, j) = (k % nx, k / nx);
    let ip = if i + 1 < nx { i + 1 } else { i };
    let im = if i > 0 { i - 1 } else { i };
    let jp = if j + 1 < ny { j + 1 } else { j };
    let jm = if j > 0 { j - 1 } else { j };
    let at = |a: usize, b: usize| values[grid.index(a, b)];
    (at(ip, jp) - at(ip, jm) - at(im, jp) + at(im, jm)) / (4.0 * grid.spacing(0) * grid.spacing(1))
}

/// Midpoint quadrature `Σ f h^N`.
pub fn integrate(f: &Field) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Discrete `L²` inner product.
pub fn inner(f: &Field, g: &Field) -> f64 {
    debug_assert_eq!(f.grid, g.grid);
    f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume()
}

pub fn norm_lp(f: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "norm_lp needs p >= 1, got {p}");
    let s: f64 = f.values.iter().map(|v| v.abs().powf(p)).sum();
    (s * f.grid.cell_volume()).powf(1.0 / p)
}

pub fn norm_inf(f: &Field) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}
