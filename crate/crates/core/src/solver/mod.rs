//! Explicit finite-volume integrator for `rho_t = Lap(rho^m) + div(rho grad Phi)` with
//! zero-flux box boundaries.
//!
//! Two face-flux discretizations are available. [`FluxScheme::Split`] treats the
//! diffusion with the centered difference `(rho_R^m - rho_L^m)/h` and upwinds the drift
//! with the face-normal derivative of `Phi`. [`FluxScheme::WellBalanced`] writes the
//! total flux as `-rho grad(u + Phi)` (using `grad rho^m = rho grad u`) and upwinds
//! `rho` by the sign of the discrete face velocity `-(u + Phi)_R + (u + Phi)_L`, over `h`.
//! Both are conservative; the second keeps every sampled `(C - Phi)₊` exactly stationary.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PmeError, Result};
use crate::field::{check_exponent, mass, pow, FieldKind, ScalarField};
use crate::grid::Grid;
use crate::potential::Potential;

const EPS_GUARD: f64 = 1e-30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    Split,
    #[default]
    WellBalanced,
}

fn default_cfl() -> f64 {
    0.2
}
fn default_margin() -> f64 {
    0.1
}
fn default_guard() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub m: f64,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    /// Values below this after a step are clamped to zero.
    #[serde(default)]
    pub positivity_floor: f64,
    pub end_time: f64,
    pub output_interval: f64,
    #[serde(default)]
    pub scheme: FluxScheme,
    /// Required distance from the initial support to the box edge, as a fraction of the box width.
    #[serde(default = "default_margin")]
    pub margin_fraction: f64,
    /// Halt once the support comes within this many cells of the box edge.
    #[serde(default = "default_guard")]
    pub guard_cells: usize,
}

impl SolverConfig {
    pub fn new(m: f64, end_time: f64, output_interval: f64) -> Self {
        SolverConfig {
            m,
            cfl_factor: default_cfl(),
            positivity_floor: 0.0,
            end_time,
            output_interval,
            scheme: FluxScheme::default(),
            margin_fraction: default_margin(),
            guard_cells: default_guard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.m)?;
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 0.5) {
            return Err(invalid("cfl_factor", format!("must lie in (0, 0.5], got {}", self.cfl_factor)));
        }
        if !(self.positivity_floor >= 0.0 && self.positivity_floor.is_finite()) {
            return Err(invalid("positivity_floor", "must be nonnegative"));
        }
        if !(self.end_time > 0.0 && self.end_time.is_finite()) {
            return Err(invalid("end_time", format!("must be positive, got {}", self.end_time)));
        }
        if !(self.output_interval > 0.0 && self.output_interval.is_finite()) {
            return Err(invalid("output_interval", format!("must be positive, got {}", self.output_interval)));
        }
        if !(0.0..0.5).contains(&self.margin_fraction) {
            return Err(invalid("margin_fraction", "must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Potential samples prepared for one grid.
#[derive(Clone, Debug)]
pub struct Discretization {
    grid: Grid,
    phi: Potential,
    scheme: FluxScheme,
    /// `Phi` at cell centers.
    phi_c: Vec<f64>,
    /// `-dPhi/dn` at the face to the right of each cell, per axis (0 past the last cell).
    drift: [Vec<f64>; 2],
}

impl Discretization {
    pub fn new(grid: &Grid, phi: &Potential, scheme: FluxScheme) -> Result<Self> {
        phi.validate(grid.dim())?;
        let n = grid.len();
        let phi_c = (0..n).map(|k| phi.value(&grid.center(k))).collect();
        let mut drift = [vec![0.0; n], Vec::new()];
        if grid.dim() == 2 {
            drift[1] = vec![0.0; n];
        }
        for (a, dr) in drift.iter_mut().enumerate().take(grid.dim()) {
            for (k, slot) in dr.iter_mut().enumerate() {
                let idx = grid.unravel(k);
                if idx[a] + 1 < grid.cells()[a] {
                    let mut x = grid.center(k);
                    x[a] = grid.face_coord(a, idx[a]);
                    *slot = -phi.partial(&x, a);
                }
            }
        }
        Ok(Discretization {
            grid: grid.clone(),
            phi: phi.clone(),
            scheme,
            phi_c,
            drift,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.phi
    }

    pub fn scheme(&self) -> FluxScheme {
        self.scheme
    }

    /// Divergence of the face fluxes into `out`; returns the largest face speed seen.
    ///
    /// Faces between two empty cells carry no flux in either scheme, so only the
    /// bounding box of the support (plus one cell) is visited.
    fn rates(&self, rho: &[f64], m: f64, out: &mut [f64], u: &mut Vec<f64>) -> f64 {
        out.iter_mut().for_each(|v| *v = 0.0);
        let Some(bbox) = support_box(&self.grid, rho, 0.0, 1) else {
            return 0.0;
        };
        let h = self.grid.h();
        let d = self.grid.dim();
        let wb = self.scheme == FluxScheme::WellBalanced;
        if wb {
            u.resize(rho.len(), 0.0);
            let c = m / (m - 1.0);
            for_each_in_box(&self.grid, &bbox, |k| {
                u[k] = if rho[k] > 0.0 { c * pow(rho[k], m - 1.0) } else { 0.0 };
            });
        }
        let mut vmax: f64 = 0.0;
        for a in 0..d {
            let s = self.grid.stride(a);
            if bbox[a].0 == bbox[a].1 {
                continue;
            }
            // left cells of the faces along this axis
            let mut inner = bbox;
            inner[a].1 -= 1;
            for_each_in_box(&self.grid, &inner, |l| {
                let r = l + s;
                let (rl, rr) = (rho[l], rho[r]);
                let (v, diff) = if wb {
                    ((u[l] + self.phi_c[l] - u[r] - self.phi_c[r]) / h, 0.0)
                } else {
                    (self.drift[a][l], (pow(rl, m) - pow(rr, m)) / h)
                };
                vmax = vmax.max(v.abs());
                let f = diff + if v > 0.0 { v * rl } else { v * rr };
                let q = f / h;
                out[l] -= q;
                out[r] += q;
            });
        }
        vmax
    }
}

/// Inclusive per-axis index ranges of the cells with `rho > thr`, widened by `pad`.
fn support_box(grid: &Grid, rho: &[f64], thr: f64, pad: usize) -> Option<[(usize, usize); 2]> {
    let mut bb = [(usize::MAX, 0usize); 2];
    let mut any = false;
    for (k, &v) in rho.iter().enumerate() {
        if v > thr {
            any = true;
            let idx = grid.unravel(k);
            for a in 0..grid.dim() {
                bb[a].0 = bb[a].0.min(idx[a]);
                bb[a].1 = bb[a].1.max(idx[a]);
            }
        }
    }
    if !any {
        return None;
    }
    if grid.dim() == 1 {
        bb[1] = (0, 0);
    }
    for a in 0..grid.dim() {
        bb[a].0 = bb[a].0.saturating_sub(pad);
        bb[a].1 = (bb[a].1 + pad).min(grid.cells()[a] - 1);
    }
    Some(bb)
}

fn for_each_in_box(grid: &Grid, bb: &[(usize, usize); 2], mut f: impl FnMut(usize)) {
    for i in bb[0].0..=bb[0].1 {
        for j in bb[1].0..=bb[1].1 {
            f(grid.ravel([i, j]));
        }
    }
}

/// Conservative discrete divergence of the total flux (well-balanced scheme).
///
/// The returned rates sum to zero up to rounding, since every face flux is added to
/// one cell and subtracted from its neighbour.
pub fn flux_divergence(rho: &ScalarField, phi: &Potential, m: f64) -> Result<Vec<f64>> {
    flux_divergence_with(rho, phi, m, FluxScheme::default())
}

pub fn flux_divergence_with(rho: &ScalarField, phi: &Potential, m: f64, scheme: FluxScheme) -> Result<Vec<f64>> {
    rho.expect_kind(FieldKind::Density)?;
    check_exponent(m)?;
    let disc = Discretization::new(rho.grid(), phi, scheme)?;
    let mut out = vec![0.0; rho.values().len()];
    disc.rates(rho.values(), m, &mut out, &mut Vec::new());
    Ok(out)
}

/// `sigma * min(h² / (2d D + eps), h / (V + eps))` for diffusivity bound `D = max m rho^{m-1}`
/// and face speed bound `V`.
pub fn cfl_dt_from_bounds(h: f64, d: usize, m: f64, max_rho: f64, max_speed: f64, sigma: f64) -> f64 {
    let diff = m * pow(max_rho.max(0.0), m - 1.0);
    sigma * (h * h / (2.0 * d as f64 * diff + EPS_GUARD)).min(h / (max_speed + EPS_GUARD))
}

/// Stable step for `rho`: the speed bound covers `|dPhi/dn|` and, for the
/// well-balanced scheme, the discrete gradient of `u + Phi` on active faces.
pub fn cfl_dt(rho: &ScalarField, phi: &Potential, m: f64, sigma: f64) -> Result<f64> {
    rho.expect_kind(FieldKind::Density)?;
    check_exponent(m)?;
    let disc = Discretization::new(rho.grid(), phi, FluxScheme::WellBalanced)?;
    let mut out = vec![0.0; rho.values().len()];
    let v_wb = disc.rates(rho.values(), m, &mut out, &mut Vec::new());
    let v_phi = disc.drift.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(cfl_dt_from_bounds(rho.grid().h(), rho.grid().dim(), m, rho.max(), v_wb.max(v_phi), sigma))
}

/// Mutable integration state.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub rho: ScalarField,
    pub t: f64,
    pub step: u64,
    /// Net flux through the box faces; zero by construction of the scheme.
    pub boundary_flux: f64,
    /// Mass moved by clamping since the last reset.
    pub clamped_mass: f64,
    rate: Vec<f64>,
    scratch: Vec<f64>,
}

impl SolverState {
    pub fn new(rho: ScalarField, t: f64) -> Result<Self> {
        rho.expect_kind(FieldKind::Density)?;
        let n = rho.values().len();
        Ok(SolverState {
            rho,
            t,
            step: 0,
            boundary_flux: 0.0,
            clamped_mass: 0.0,
            rate: vec![0.0; n],
            scratch: Vec::new(),
        })
    }

    /// Compute rates for the current state and the stable step they allow.
    fn prepare(&mut self, disc: &Discretization, cfg: &SolverConfig) -> f64 {
        let v = disc.rates(self.rho.values(), cfg.m, &mut self.rate, &mut self.scratch);
        let g = disc.grid();
        cfl_dt_from_bounds(g.h(), g.dim(), cfg.m, self.rho.max(), v, cfg.cfl_factor)
    }

    /// Forward-Euler update with prepared rates, then clamp and re-deposit.
    fn apply(&mut self, dt: f64, cfg: &SolverConfig) -> Result<()> {
        let vals = self.rho.values_mut();
        let mut finite = dt > 0.0 && dt.is_finite();
        for (r, q) in vals.iter_mut().zip(&self.rate) {
            *r += dt * q;
            finite &= r.is_finite();
        }
        if !finite {
            return Err(PmeError::NonFinite {
                step: self.step + 1,
                t: self.t + dt,
            });
        }
        self.clamped_mass += clamp_redeposit(vals, cfg.positivity_floor);
        self.t += dt;
        self.step += 1;
        Ok(())
    }
}

/// Zero out values below `floor` (all negatives when `floor == 0`) and restore the
/// total by rescaling the remaining positive cells. Returns the absolute mass moved.
fn clamp_redeposit(v: &mut [f64], floor: f64) -> f64 {
    let mut removed = 0.0;
    let mut hit = false;
    for x in v.iter_mut() {
        if *x < floor || *x < 0.0 {
            removed += *x;
            *x = 0.0;
            hit = true;
        }
    }
    if !hit || removed == 0.0 {
        return 0.0;
    }
    let pos: f64 = v.iter().sum();
    if pos > 0.0 {
        let scale = 1.0 + removed / pos;
        if scale >= 0.0 {
            v.iter_mut().for_each(|x| *x *= scale);
        }
    }
    removed.abs()
}

/// One forward-Euler step of size `dt`, rejected if it exceeds the stable limit.
pub fn step(state: &mut SolverState, dt: f64, disc: &Discretization, cfg: &SolverConfig) -> Result<()> {
    let limit = state.prepare(disc, cfg);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(PmeError::CflViolation { dt, limit });
    }
    state.apply(dt, cfg)
}

/// Per-snapshot diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub max_rho: f64,
    /// Largest distance from the origin of a cell center in the numerical support.
    pub support_radius: f64,
    /// Mass moved by clamping since the previous snapshot.
    pub clamped_mass: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub rho: ScalarField,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub potential: Potential,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<Diagnostics>,
    pub steps: u64,
    /// Set when the run stopped early because the support entered the guard band.
    pub halted: Option<String>,
    pub boundary_flux: f64,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.snapshots[0].rho.grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory holds its initial condition")
    }

    /// Largest relative mass deviation from the initial snapshot.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics
            .iter()
            .map(|d| (d.mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Relative pressure level defining the numerical support: cells with
/// `u > SUPPORT_LEVEL * max u`. The explicit scheme leaves a super-exponentially
/// decaying tail ahead of the front; this level cuts it off.
pub const SUPPORT_LEVEL: f64 = 1e-3;

/// Density threshold equivalent to pressure level `rel * max u`.
pub fn support_threshold(rho: &ScalarField, m: f64, rel: f64) -> f64 {
    rel.powf(1.0 / (m - 1.0)) * rho.max()
}

/// Largest distance from the origin of a cell center in the numerical support.
pub fn support_radius(rho: &ScalarField, m: f64) -> f64 {
    let g = rho.grid();
    let thr = support_threshold(rho, m, SUPPORT_LEVEL);
    rho.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > thr)
        .map(|(k, _)| g.center(k).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn diagnostics(rho: &ScalarField, m: f64, t: f64, clamped: f64) -> Diagnostics {
    Diagnostics {
        t,
        mass: mass(rho).expect("density field"),
        max_rho: rho.max(),
        support_radius: support_radius(rho, m),
        clamped_mass: clamped,
    }
}

/// Check that the support keeps `fraction * width` away from every box face.
pub fn check_margin(rho: &ScalarField, fraction: f64) -> Result<()> {
    let g = rho.grid();
    for (k, &v) in rho.values().iter().enumerate() {
        if v > 0.0 {
            let x = g.center(k);
            for a in 0..g.dim() {
                let gap = (x[a] - g.lower()[a]).min(g.upper()[a] - x[a]);
                if gap < fraction * g.width(a) {
                    return Err(PmeError::MarginViolation(format!(
                        "cell at {x:?} is {gap:.4} from the box edge, need {:.4}",
                        fraction * g.width(a)
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Whether the numerical support sits within `cells` cells of the box edge.
fn in_guard_band(rho: &ScalarField, m: f64, cells: usize) -> bool {
    let g = rho.grid();
    let thr = support_threshold(rho, m, SUPPORT_LEVEL);
    let Some(bb) = support_box(g, rho.values(), thr, 0) else {
        return false;
    };
    (0..g.dim()).any(|a| bb[a].0 < cells || bb[a].1 + cells >= g.cells()[a])
}

/// Evolve `rho0` to `cfg.end_time`, recording snapshots every `cfg.output_interval`.
pub fn evolve(rho0: &ScalarField, phi: &Potential, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut v = evolve_many(std::slice::from_ref(rho0), phi, cfg)?;
    Ok(v.pop().expect("one trajectory"))
}

/// Evolve several initial data in lockstep with a shared time step (the smallest
/// stable step over the ensemble), so that the discrete comparison principle
/// applies exactly between members.
pub fn evolve_many(rho0s: &[ScalarField], phi: &Potential, cfg: &SolverConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let Some(first) = rho0s.first() else {
        return Err(invalid("rho0", "no initial data"));
    };
    for r in rho0s {
        r.expect_kind(FieldKind::Density)?;
        if r.grid() != first.grid() {
            return Err(PmeError::GridMismatch);
        }
        check_margin(r, cfg.margin_fraction)?;
    }
    let disc = Discretization::new(first.grid(), phi, cfg.scheme)?;
    let mut states: Vec<SolverState> = rho0s
        .iter()
        .map(|r| SolverState::new(r.clone(), 0.0))
        .collect::<Result<_>>()?;
    let mut trajs: Vec<Trajectory> = rho0s
        .iter()
        .map(|r| Trajectory {
            config: cfg.clone(),
            potential: phi.clone(),
            snapshots: vec![Snapshot { t: 0.0, rho: r.clone() }],
            diagnostics: vec![diagnostics(r, cfg.m, 0.0, 0.0)],
            steps: 0,
            halted: None,
            boundary_flux: 0.0,
        })
        .collect();

    let n_out = (cfg.end_time / cfg.output_interval - 1e-9).ceil().max(1.0) as u64;
    let out_time = |k: u64| (k as f64 * cfg.output_interval).min(cfg.end_time);
    let mut k_next = 1u64;
    let mut t = 0.0;
    'outer: while k_next <= n_out {
        let target = out_time(k_next);
        let mut dt = states
            .iter_mut()
            .map(|s| s.prepare(&disc, cfg))
            .fold(f64::INFINITY, f64::min);
        let mut hit = false;
        if t + dt >= target - 1e-12 * target.max(1.0) {
            dt = target - t;
            hit = true;
        }
        for s in states.iter_mut() {
            s.apply(dt, cfg)?;
        }
        t = if hit { target } else { t + dt };
        let mut halt = None;
        for (s, tr) in states.iter_mut().zip(trajs.iter_mut()) {
            s.t = t;
            tr.steps = s.step;
            if halt.is_none() && in_guard_band(&s.rho, cfg.m, cfg.guard_cells) {
                halt = Some(format!(
                    "support reached within {} cells of the box boundary at t = {t}",
                    cfg.guard_cells
                ));
            }
        }
        if hit || halt.is_some() {
            for (s, tr) in states.iter_mut().zip(trajs.iter_mut()) {
                tr.snapshots.push(Snapshot { t, rho: s.rho.clone() });
                tr.diagnostics.push(diagnostics(&s.rho, cfg.m, t, s.clamped_mass));
                s.clamped_mass = 0.0;
            }
            k_next += 1;
        }
        if let Some(msg) = halt {
            for tr in trajs.iter_mut() {
                tr.halted = Some(msg.clone());
            }
            break 'outer;
        }
    }
    Ok(trajs)
}
