//! Shared fixtures for the benchmarks.

use pmelab_core::field::{FieldKind, ScalarField};
use pmelab_core::Grid;

/// A compactly supported parabola filling the middle third of a `[-3, 3]^d` box.
pub fn parabola(d: usize, n: usize) -> ScalarField {
    let g = match d {
        1 => Grid::line(-3.0, 3.0, n),
        _ => Grid::square(-3.0, 3.0, n),
    }
    .expect("valid benchmark grid");
    ScalarField::from_fn(g, FieldKind::Density, |x| (1.0 - x.iter().map(|v| v * v).sum::<f64>()).max(0.0))
        .expect("nonnegative profile")
}
