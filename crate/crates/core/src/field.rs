//! Scalar fields on a grid and the density/pressure change of variables.
//!
//! The pressure variable is `u = m/(m-1) rho^(m-1)`; it turns the density
//! equation into the pressure form whose free boundary moves with velocity
//! `|Du| + DPhi . Du/|Du|`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PmeError, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Density,
    Pressure,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Density => "density",
            FieldKind::Pressure => "pressure",
        }
    }
}

/// Nonnegative cell-center samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    kind: FieldKind,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PmeError::InvalidGrid(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(PmeError::NegativeValue { index, value });
        }
        Ok(ScalarField { grid, values, kind })
    }

    pub fn zeros(grid: Grid, kind: FieldKind) -> Self {
        let n = grid.len();
        ScalarField {
            grid,
            values: vec![0.0; n],
            kind,
        }
    }

    /// Sample `f` at every cell center. Negative samples are an error.
    pub fn from_fn(grid: Grid, kind: FieldKind, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.center(k))).collect();
        ScalarField::new(grid, values, kind)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `a * self + b * other`, which must stay nonnegative.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        ScalarField::new(self.grid.clone(), values, self.kind)
    }

    pub fn scaled(&self, a: f64) -> Result<ScalarField> {
        ScalarField::new(
            self.grid.clone(),
            self.values.iter().map(|v| a * v).collect(),
            self.kind,
        )
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn check_compatible(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(PmeError::GridMismatch);
        }
        if self.kind != other.kind {
            return Err(PmeError::WrongKind {
                expected: self.kind,
                found: other.kind,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_kind(&self, expected: FieldKind) -> Result<()> {
        if self.kind != expected {
            return Err(PmeError::WrongKind {
                expected,
                found: self.kind,
            });
        }
        Ok(())
    }
}

/// Porous-medium exponent and total mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: f64,
    pub mass: f64,
}

impl ModelParams {
    pub fn new(m: f64, mass: f64) -> Result<Self> {
        check_exponent(m)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("mass", format!("must be > 0, got {mass}")));
        }
        Ok(ModelParams { m, mass })
    }
}

pub(crate) fn check_exponent(m: f64) -> Result<()> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(invalid("m", format!("porous-medium exponent must satisfy m > 1, got {m}")));
    }
    Ok(())
}

/// `x^e` with a fast path for small integer exponents.
#[inline]
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e.fract() == 0.0 && e.abs() <= 16.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

/// Pointwise pressure `m/(m-1) rho^(m-1)` at a single value.
#[inline]
pub fn pressure_value(rho: f64, m: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else {
        m / (m - 1.0) * pow(rho, m - 1.0)
    }
}

/// Pointwise density `((m-1) u / m)^(1/(m-1))` at a single value.
#[inline]
pub fn density_value(u: f64, m: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        pow((m - 1.0) * u / m, 1.0 / (m - 1.0))
    }
}

pub fn pressure_from_density(rho: &ScalarField, m: f64) -> Result<ScalarField> {
    rho.expect_kind(FieldKind::Density)?;
    check_exponent(m)?;
    let values = rho.values.iter().map(|&r| pressure_value(r, m)).collect();
    Ok(ScalarField {
        grid: rho.grid.clone(),
        values,
        kind: FieldKind::Pressure,
    })
}

pub fn density_from_pressure(u: &ScalarField, m: f64) -> Result<ScalarField> {
    u.expect_kind(FieldKind::Pressure)?;
    check_exponent(m)?;
    let values = u.values.iter().map(|&p| density_value(p, m)).collect();
    Ok(ScalarField {
        grid: u.grid.clone(),
        values,
        kind: FieldKind::Density,
    })
}

/// Total mass by midpoint quadrature.
pub fn mass(rho: &ScalarField) -> Result<f64> {
    rho.expect_kind(FieldKind::Density)?;
    Ok(rho.values.iter().sum::<f64>() * rho.grid.cell_volume())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

/// Discrete `L^p` distance with `h^d` weights (max-abs for `LInf`).
pub fn lp_distance(f: &ScalarField, g: &ScalarField, p: Norm) -> Result<f64> {
    f.check_compatible(g)?;
    let w = f.grid.cell_volume();
    let diffs = f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs());
    Ok(match p {
        Norm::L1 => diffs.sum::<f64>() * w,
        Norm::L2 => (diffs.map(|d| d * d).sum::<f64>() * w).sqrt(),
        Norm::LInf => diffs.fold(0.0, f64::max),
    })
}
