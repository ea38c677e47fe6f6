//! A numerical laboratory for the porous medium equation with a drift potential,
//!
//! ```text
//! rho_t = Lap(rho^m) + div(rho grad Phi),   m > 1,
//! ```
//!
//! and its pressure form `u = m/(m-1) rho^(m-1)`:
//!
//! ```text
//! u_t = (m-1) u Lap u + |grad u|^2 + grad u . grad Phi + (m-1) u Lap Phi.
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod exact;
pub mod field;
pub mod freeboundary;
pub mod grid;
pub mod io;
pub mod potential;
pub mod solver;
pub mod verify;

pub use error::{PmeError, Result};
pub use field::{
    density_from_pressure, lp_distance, mass, pressure_from_density, FieldKind, ModelParams, Norm,
    ScalarField,
};
pub use grid::Grid;
pub use potential::{potential_probe, Potential, PotentialMeta, Probe};
