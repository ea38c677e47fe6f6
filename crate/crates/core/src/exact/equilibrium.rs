use serde::{Deserialize, Serialize};

use super::{Derivatives, Evaluable};
use crate::error::{invalid, PmeError, Result};
use crate::field::{check_exponent, density_value, FieldKind, ScalarField};
use crate::grid::Grid;
use crate::potential::Potential;

/// Stationary pressure `u_∞ = (C₀ - Φ)₊`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumProfile {
    pub phi: Potential,
    pub c0: f64,
    pub m: f64,
}

impl EquilibriumProfile {
    pub fn new(phi: Potential, c0: f64, m: f64) -> Result<Self> {
        check_exponent(m)?;
        if !c0.is_finite() {
            return Err(invalid("c0", "must be finite"));
        }
        Ok(EquilibriumProfile { phi, c0, m })
    }

    /// Equilibrium carrying mass `m0` on `grid`.
    pub fn with_mass(phi: Potential, m: f64, m0: f64, grid: &Grid) -> Result<Self> {
        let c0 = solve_mass_constant(&phi, m, m0, grid)?;
        EquilibriumProfile::new(phi, c0, m)
    }

    /// Density counterpart sampled at cell centers.
    pub fn density(&self, grid: &Grid) -> Result<ScalarField> {
        let m = self.m;
        ScalarField::from_fn(grid.clone(), FieldKind::Density, |x| {
            density_value((self.c0 - self.phi.value(x)).max(0.0), m)
        })
    }
}

impl Evaluable for EquilibriumProfile {
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        (self.c0 - self.phi.value(x)).max(0.0)
    }

    fn derivatives(&self, x: &[f64], _t: f64) -> Option<Derivatives> {
        let probe = self.phi.probe(x);
        let v = self.c0 - probe.value;
        if v < -1e-14 * self.c0.abs().max(1.0) {
            return None;
        }
        Some(Derivatives {
            value: v.max(0.0),
            gradient: probe.gradient.iter().map(|g| -g).collect(),
            laplacian: -probe.laplacian,
            time: 0.0,
        })
    }
}

/// Sampled equilibrium pressure, flagged when it vanishes identically.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumField {
    pub field: ScalarField,
    /// `C₀ ≤ min Φ` on the grid: the profile is the zero field.
    pub degenerate: bool,
}

/// Sample `(C₀ - Φ)₊` at the cell centers of `grid`.
pub fn equilibrium_eval(e: &EquilibriumProfile, grid: &Grid) -> Result<EquilibriumField> {
    e.phi.validate(grid.dim())?;
    let field = ScalarField::from_fn(grid.clone(), FieldKind::Pressure, |x| e.value(x, 0.0))?;
    let degenerate = field.values().iter().all(|&v| v == 0.0);
    Ok(EquilibriumField { field, degenerate })
}

/// Find `C₀` so that the sampled equilibrium density has mass `m0`, by bisection.
///
/// The support `{Φ < C₀}` must avoid the outermost layer of cells.
pub fn solve_mass_constant(phi: &Potential, m: f64, m0: f64, grid: &Grid) -> Result<f64> {
    check_exponent(m)?;
    phi.validate(grid.dim())?;
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(invalid("m0", format!("target mass must be positive, got {m0}")));
    }
    let vol = grid.cell_volume();
    let phis: Vec<f64> = (0..grid.len()).map(|k| phi.value(&grid.center(k))).collect();
    let on_edge = |k: usize| {
        let idx = grid.unravel(k);
        (0..grid.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == grid.cells()[a])
    };
    let lo0 = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = (0..grid.len())
        .filter(|&k| on_edge(k))
        .map(|k| phis[k])
        .fold(f64::INFINITY, f64::min);
    let mass_at = |c: f64| -> f64 {
        phis.iter()
            .map(|&p| if p < c { density_value(c - p, m) } else { 0.0 })
            .sum::<f64>()
            * vol
    };
    if !(hi0 > lo0) || mass_at(hi0) < m0 {
        return Err(PmeError::BoxTooSmall(format!(
            "mass {m0} needs a level set reaching the box edge (largest admissible level {hi0} holds mass {})",
            mass_at(hi0)
        )));
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mm = mass_at(mid);
        if mm < m0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (mm - m0).abs() <= 1e-15 * m0 {
            return Ok(mid);
        }
    }
    let c = 0.5 * (lo + hi);
    debug_assert!((mass_at(c) - m0).abs() <= 1e-10 * m0);
    Ok(c)
}
