//! Uniform cell-centered Cartesian grids in one or two dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{PmeError, Result};

const MIN_CELLS: usize = 4;

/// A uniform cell-centered grid with equal spacing on every axis.
///
/// Cell `i` on an axis has its center at `lower + (i + 1/2) h`. Multi-dimensional
/// fields are stored row-major: axis 0 varies slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    h: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = PmeError;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.lower, spec.upper, spec.cells)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            lower: g.lower,
            upper: g.upper,
            cells: g.cells,
        }
    }
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = cells.len();
        if !(1..=2).contains(&d) {
            return Err(PmeError::InvalidGrid(format!("dimension must be 1 or 2, got {d}")));
        }
        if lower.len() != d || upper.len() != d {
            return Err(PmeError::InvalidGrid(
                "lower/upper/cells must have the same length".into(),
            ));
        }
        let mut h = None;
        for axis in 0..d {
            let n = cells[axis];
            if n < MIN_CELLS {
                return Err(PmeError::InvalidGrid(format!(
                    "axis {axis} has {n} cells, need at least {MIN_CELLS}"
                )));
            }
            let (lo, hi) = (lower[axis], upper[axis]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(PmeError::InvalidGrid(format!(
                    "axis {axis} bounds [{lo}, {hi}] are not a finite increasing interval"
                )));
            }
            let ha = (hi - lo) / n as f64;
            match h {
                None => h = Some(ha),
                Some(h0) if ((ha - h0) / h0).abs() > 1e-12 => {
                    return Err(PmeError::InvalidGrid(format!(
                        "spacing differs between axes ({h0} vs {ha})"
                    )))
                }
                _ => {}
            }
        }
        Ok(Grid {
            lower,
            upper,
            cells,
            h: h.unwrap(),
        })
    }

    /// One-dimensional grid on `[lower, upper]` with `n` cells.
    pub fn line(lower: f64, upper: f64, n: usize) -> Result<Self> {
        Grid::new(vec![lower], vec![upper], vec![n])
    }

    /// Square two-dimensional grid `[lower, upper]^2` with `n` cells per axis.
    pub fn square(lower: f64, upper: f64, n: usize) -> Result<Self> {
        Grid::new(vec![lower; 2], vec![upper; 2], vec![n; 2])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..].iter().product()
    }

    /// Center coordinate of cell `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.h
    }

    /// Coordinate of the face between cells `i` and `i + 1` along `axis`.
    #[inline]
    pub fn face_coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 1.0) * self.h
    }

    /// Per-axis indices of flat cell index `flat`.
    pub fn unravel(&self, flat: usize) -> [usize; 2] {
        match self.dim() {
            1 => [flat, 0],
            _ => [flat / self.cells[1], flat % self.cells[1]],
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] * self.cells[1] + idx[1],
        }
    }

    /// Center of the cell with flat index `flat`, as a `dim()`-long vector.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let idx = self.unravel(flat);
        (0..self.dim()).map(|a| self.coord(a, idx[a])).collect()
    }

    /// Centers of every cell in storage order.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    /// Whether `x` lies in the closed grid box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    /// Index of the cell containing `x` (clamped to the box).
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; 2];
        for a in 0..self.dim() {
            let f = ((x[a] - self.lower[a]) / self.h).floor();
            idx[a] = f.clamp(0.0, (self.cells[a] - 1) as f64) as usize;
        }
        self.ravel(idx)
    }

    /// Flat indices of the axis-neighbors of `flat` (at most `2d`).
    pub fn neighbors(&self, flat: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.unravel(flat);
        (0..self.dim()).flat_map(move |a| {
            let s = self.stride(a);
            let lo = (idx[a] > 0).then(|| flat - s);
            let hi = (idx[a] + 1 < self.cells[a]).then(|| flat + s);
            lo.into_iter().chain(hi)
        })
    }

    /// Halve the spacing: same box, twice the cells per axis.
    pub fn refined(&self) -> Grid {
        Grid::new(
            self.lower.clone(),
            self.upper.clone(),
            self.cells.iter().map(|n| 2 * n).collect(),
        )
        .expect("refining a valid grid stays valid")
    }

    /// Width of the box along `axis`.
    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }
}
