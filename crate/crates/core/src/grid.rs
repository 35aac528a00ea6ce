//! Periodic grids on flat complex tori and scalar fields living on them.
//!
//! A grid of complex dimension `n` has `2n` real axes ordered
//! `(x1, y1, x2, y2)`, with `z_j = x_j + i y_j`. Values are stored row-major,
//! the last axis varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    res: usize,
    period: f64,
}

impl TorusGrid {
    pub fn new(n: usize, res: usize, period: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("complex dimension must be 1 or 2, got {n}")));
        }
        if res < 8 || !res.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("res must be a power of two >= 8, got {res}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        Ok(Self { n, res, period })
    }

    /// Unit-period grid.
    pub fn unit(n: usize, res: usize) -> Result<Self> {
        Self::new(n, res, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of real axes, `2n`.
    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.res as f64
    }

    /// `V = period^(2n)`, the volume of the torus for the flat reference form.
    pub fn volume(&self) -> f64 {
        self.period.powi(self.dims() as i32)
    }

    /// Per-axis integer indices of a flat index.
    pub fn axis_indices(&self, mut index: usize) -> [usize; 4] {
        let mut out = [0usize; 4];
        for a in (0..self.dims()).rev() {
            out[a] = index % self.res;
            index /= self.res;
        }
        out
    }

    /// Real coordinates of a gridpoint.
    pub fn coords(&self, index: usize) -> [f64; 4] {
        let idx = self.axis_indices(index);
        let h = self.spacing();
        let mut out = [0.0; 4];
        for a in 0..self.dims() {
            out[a] = idx[a] as f64 * h;
        }
        out
    }

    /// Wrap a coordinate difference into `[-period/2, period/2)`.
    pub fn wrap(&self, d: f64) -> f64 {
        let l = self.period;
        d - l * (d / l + 0.5).floor()
    }

    /// Euclidean distance on the torus between a gridpoint and `p`.
    pub fn distance_to(&self, index: usize, p: &TorusPoint) -> f64 {
        let x = self.coords(index);
        let mut s = 0.0;
        for a in 0..self.dims() {
            let d = self.wrap(x[a] - p.coord(a));
            s += d * d;
        }
        s.sqrt()
    }

    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// A point of the torus, in real coordinates `(x1, y1[, x2, y2])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint(pub Vec<f64>);

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    /// The centre of the cell whose lower corner is the origin, i.e. half a
    /// cell away from every gridpoint.
    pub fn off_node(grid: &TorusGrid, base: &[f64]) -> Self {
        let h = grid.spacing();
        let mut c = Vec::with_capacity(grid.dims());
        for a in 0..grid.dims() {
            let b = base.get(a).copied().unwrap_or(0.0);
            c.push((b / h).floor() * h + 0.5 * h);
        }
        Self(c)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.0.get(axis).copied().unwrap_or(0.0)
    }

    pub fn check_dims(&self, grid: &TorusGrid) -> Result<()> {
        if self.0.len() != grid.dims() {
            return Err(Error::InvalidSpec(format!(
                "point has {} coordinates, grid has {} real axes",
                self.0.len(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

/// A real scalar field on a torus grid (potentials, densities, exponents).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl PotentialField {
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample a function of the real coordinates at every gridpoint.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let dims = grid.dims();
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                f(&x[..dims])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
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

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn argmin(&self) -> usize {
        argmin(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `a*self + b*other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}
