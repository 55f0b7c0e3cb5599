//! Uniform cell grids on intervals and boxes, with midpoint quadrature.
//!
//! All fields are piecewise constant per cell, so integrals and `L^p` norms
//! of fields are evaluated exactly by the midpoint rule. Cells are indexed
//! in center order; 2d fields are stored row-major over the first axis.

use crate::error::{Error, Result};

/// Uniform subdivision of a compact interval `[lo, hi]` into `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Cell width, `(hi - lo) / n`.
    pub h: f64,
    /// Cell midpoints, `lo + (k + 1/2) h`.
    pub centers: Vec<f64>,
}

impl Grid1d {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!(
                "need hi > lo, got [{lo}, {hi}]"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("cell count must be >= 1".into()));
        }
        let h = (hi - lo) / n as f64;
        let centers = (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect();
        Ok(Self { lo, hi, n, h, centers })
    }

    /// Lebesgue measure of the interval.
    pub fn measure(&self) -> f64 {
        self.hi - self.lo
    }

    /// Index of the cell containing `x` (clamped to the boundary cells).
    pub fn cell_of(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.h).floor() as isize;
        k.clamp(0, self.n as isize - 1) as usize
    }
}

/// Cartesian product of two 1d grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub x: Grid1d,
    pub y: Grid1d,
}

impl Grid2d {
    pub fn new(x: Grid1d, y: Grid1d) -> Self {
        Self { x, y }
    }

    pub fn cell_area(&self) -> f64 {
        self.x.h * self.y.h
    }

    pub fn cell_count(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn measure(&self) -> f64 {
        self.x.measure() * self.y.measure()
    }
}

/// Piecewise-constant function on a `Grid1d`, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1d {
    pub grid: Grid1d,
    pub values: Vec<f64>,
}

impl Field1d {
    pub fn new(grid: Grid1d, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1d, value: f64) -> Self {
        let values = vec![value; grid.n];
        Self { grid, values }
    }

    /// Sample `f` at the cell centers.
    pub fn from_fn(grid: Grid1d, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.centers.iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h
    }

    /// `L^p` norm for `p in [1, inf)`; max norm for `p = inf`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(&self.values, self.grid.h, p)
    }

    pub fn inner(&self, other: &Field1d) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.h
    }
}

/// Piecewise-constant function on a `Grid2d`; index `(i, j) -> i * ny + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2d {
    pub grid: Grid2d,
    pub values: Vec<f64>,
}

impl Field2d {
    pub fn new(grid: Grid2d, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2d, value: f64) -> Self {
        let values = vec![value; grid.cell_count()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid2d, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for &cx in &grid.x.centers {
            for &cy in &grid.y.centers {
                values.push(f(cx, cy));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.y.n + j
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.y.n + j]
    }

    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(&self.values, self.grid.cell_area(), p)
    }

    pub fn inner(&self, other: &Field2d) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area()
    }

    /// Cellwise difference `self - other` on a shared grid.
    pub fn sub(&self, other: &Field2d) -> Result<Field2d> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Field2d { grid: self.grid.clone(), values })
    }
}

fn lp_norm(values: &[f64], cell_measure: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((s * cell_measure).powf(1.0 / p))
}

/// Discrete `W^{1,p}` norm of a 2d field raised to the `p`-th power:
/// `sum(|f|^p + |D1 f|^p + |D2 f|^p) * cell_area`, with forward differences
/// and one-sided closure at the upper boundary.
///
/// Used as the cost anchor penalty, which requires `p > 2`.
pub fn w1p_penalty(f: &Field2d, p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty exponent must satisfy p > 2, got {p}"
        )));
    }
    let nx = f.grid.x.n;
    let ny = f.grid.y.n;
    let hx = f.grid.x.h;
    let hy = f.grid.y.h;
    let mut total = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let v = f.at(i, j);
            let dx = if nx == 1 {
                0.0
            } else if i + 1 < nx {
                (f.at(i + 1, j) - v) / hx
            } else {
                (v - f.at(i - 1, j)) / hx
            };
            let dy = if ny == 1 {
                0.0
            } else if j + 1 < ny {
                (f.at(i, j + 1) - v) / hy
            } else {
                (v - f.at(i, j - 1)) / hy
            };
            total += v.abs().powf(p) + dx.abs().powf(p) + dy.abs().powf(p);
        }
    }
    Ok(total * f.grid.cell_area())
}
