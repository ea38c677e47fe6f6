use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PmeError, Result};
use crate::exact::Evaluable;
use crate::field::{check_exponent, pressure_from_density, FieldKind, ScalarField};
use crate::freeboundary::FB_LEVEL;
use crate::grid::Grid;
use crate::potential::Potential;
use crate::solver::Trajectory;

/// Pressure snapshots on a common grid, from a run or sampled from a closed form.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    pub times: Vec<f64>,
    pub u: Vec<ScalarField>,
    pub m: f64,
    pub potential: Potential,
}

impl SpaceTimeField {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Ok(SpaceTimeField {
            times: traj.times(),
            u: traj
                .snapshots
                .iter()
                .map(|s| pressure_from_density(&s.rho, traj.config.m))
                .collect::<Result<_>>()?,
            m: traj.config.m,
            potential: traj.potential.clone(),
        })
    }

    /// Sample `e` on the cell centers of `grid` at each time. Non-finite values are errors.
    pub fn sample(e: &dyn Evaluable, grid: &Grid, times: &[f64], m: f64, potential: Potential) -> Result<Self> {
        check_exponent(m)?;
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "need at least two increasing times"));
        }
        let u = times
            .iter()
            .map(|&t| {
                ScalarField::from_fn(grid.clone(), FieldKind::Pressure, |x| {
                    let v = e.value(x, t);
                    if v.is_finite() {
                        v.max(0.0)
                    } else {
                        f64::NAN
                    }
                })
            })
            .collect::<Result<_>>()?;
        Ok(SpaceTimeField {
            times: times.to_vec(),
            u,
            m,
            potential,
        })
    }

    /// The field `u + c t`.
    pub fn with_time_shift(&self, c: f64) -> Result<Self> {
        let u = self
            .u
            .iter()
            .zip(&self.times)
            .map(|(f, &t)| {
                let vals = f.values().iter().map(|v| v + c * t).collect();
                ScalarField::new(f.grid().clone(), vals, FieldKind::Pressure)
            })
            .collect::<Result<_>>()?;
        Ok(SpaceTimeField { u, ..self.clone() })
    }

    pub fn grid(&self) -> &Grid {
        self.u[0].grid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchingMode {
    Above,
    Below,
}

/// A space-time quadratic `a + p·(x-x0) + ½(x-x0)ᵀM(x-x0) + q(t-t0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchingDescriptor {
    pub cell: usize,
    pub snapshot: usize,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub a: f64,
    pub p: Vec<f64>,
    pub hessian: [[f64; 2]; 2],
    pub q: f64,
}

/// `φ_t - [(m-1) φ Δφ + |∇φ|² + ∇·(φ∇Φ)]` at the touching point.
pub fn touching_margin(desc: &TouchingDescriptor, m: f64, phi: &Potential) -> f64 {
    let d = desc.p.len();
    let tr: f64 = (0..d).map(|a| desc.hessian[a][a]).sum();
    let probe = phi.probe(&desc.x0);
    let p2: f64 = desc.p.iter().map(|v| v * v).sum();
    let pg: f64 = desc.p.iter().zip(&probe.gradient).map(|(a, b)| a * b).sum();
    desc.q - ((m - 1.0) * desc.a * tr + p2 + pg + desc.a * probe.laplacian)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchingOptions {
    pub count: usize,
    pub seed: u64,
    /// Defaults to `5h`.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Half-widths `s` of the (2s+1)-cell by (s+1)-snapshot windows; a violation
    /// must be flagged in all of them.
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    /// Slope perturbation, in units of `h`.
    #[serde(default = "default_slope_noise")]
    pub slope_noise: f64,
    /// Largest extra curvature added (above) or removed (below).
    #[serde(default = "default_curvature")]
    pub curvature: f64,
}

fn default_windows() -> Vec<usize> {
    vec![2, 3]
}

fn default_slope_noise() -> f64 {
    0.1
}

fn default_curvature() -> f64 {
    0.1
}

impl TouchingOptions {
    pub fn new(count: usize, seed: u64) -> Self {
        TouchingOptions {
            count,
            seed,
            tol: None,
            windows: default_windows(),
            slope_noise: default_slope_noise(),
            curvature: default_curvature(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchingReport {
    pub mode: TouchingMode,
    pub tol: f64,
    pub windows: Vec<usize>,
    pub requested: usize,
    pub touched: usize,
    /// Descriptors for which no touching was achieved.
    pub skipped: usize,
    pub violations: usize,
    /// Largest violation margin agreed on by all windows (negative when none).
    pub worst_margin: f64,
    /// Up to 20 violating descriptors, taken from the widest window.
    pub examples: Vec<TouchingDescriptor>,
}

const MAX_EXAMPLES: usize = 20;

fn offsets(d: usize, s: usize) -> Vec<[isize; 2]> {
    let r = s as isize;
    let mut v = Vec::new();
    for i in -r..=r {
        if d == 1 {
            v.push([i, 0]);
        } else {
            for j in -r..=r {
                v.push([i, j]);
            }
        }
    }
    v
}

fn shift(g: &Grid, c: usize, o: [isize; 2]) -> usize {
    let idx = g.unravel(c);
    let mut out = [0usize; 2];
    for a in 0..g.dim() {
        out[a] = (idx[a] as isize + o[a]) as usize;
    }
    g.ravel(out)
}

/// Cells `(k, c)` whose whole window of half-width `s` lies above the threshold.
fn admissible_points(f: &SpaceTimeField, s: usize) -> Vec<(usize, usize)> {
    let g = f.grid();
    let d = g.dim();
    let eps: Vec<f64> = f.u.iter().map(|u| FB_LEVEL * u.max()).collect();
    let offs = offsets(d, s);
    let mut pts = Vec::new();
    for k in s..f.u.len() {
        for c in 0..g.len() {
            let idx = g.unravel(c);
            if (0..d).any(|a| idx[a] < s || idx[a] + s >= g.cells()[a]) {
                continue;
            }
            if (k - s..=k).all(|j| offs.iter().all(|&o| f.u[j].values()[shift(g, c, o)] > eps[j])) {
                pts.push((k, c));
            }
        }
    }
    pts
}

/// Adjust curvature and time slope so that `φ - u` has a one-sided extremum at
/// `(x0, t0)` over the window of half-width `s`. Returns the adjusted descriptor,
/// or `None` when the curvature needed exceeds `1/h` (no touching).
fn fit_window(f: &SpaceTimeField, base: &TouchingDescriptor, s: usize, mode: TouchingMode) -> Option<TouchingDescriptor> {
    let g = f.grid();
    let d = g.dim();
    let h = g.h();
    let (k, c) = (base.snapshot, base.cell);
    let sign = match mode {
        TouchingMode::Above => 1.0,
        TouchingMode::Below => -1.0,
    };
    let offs = offsets(d, s);
    let spatial = |dx: &[f64], hess: &[[f64; 2]; 2]| -> f64 {
        let mut v = base.a;
        for a in 0..d {
            v += base.p[a] * dx[a];
            for b in 0..d {
                v += 0.5 * dx[a] * hess[a][b] * dx[b];
            }
        }
        v
    };
    let dxs: Vec<Vec<f64>> = offs
        .iter()
        .map(|o| (0..d).map(|a| o[a] as f64 * h).collect())
        .collect();
    // extra isotropic curvature so that sign*(S - u) >= 0 at t0
    let mut lam: f64 = 0.0;
    for (o, dx) in offs.iter().zip(&dxs) {
        let r2: f64 = dx.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            continue;
        }
        let gap = sign * (f.u[k].values()[shift(g, c, *o)] - spatial(dx, &base.hessian));
        lam = lam.max(2.0 * gap / r2);
    }
    if lam > 1.0 / h {
        return None;
    }
    let mut hess = base.hessian;
    for a in 0..d {
        hess[a][a] += sign * lam;
    }
    // extremal time slope over the past snapshots
    let mut q = sign * f64::INFINITY;
    for j in k - s..k {
        let dt = base.t0 - f.times[j];
        for (o, dx) in offs.iter().zip(&dxs) {
            let cand = (spatial(dx, &hess) - f.u[j].values()[shift(g, c, *o)]) / dt;
            q = if sign > 0.0 { q.min(cand) } else { q.max(cand) };
        }
    }
    Some(TouchingDescriptor {
        hessian: hess,
        q,
        ..base.clone()
    })
}

/// Discrete viscosity touching test.
///
/// Each descriptor starts from the centered derivatives of `u` at a random window
/// inside the positivity set, perturbs the slope by up to `slope_noise·h` and the
/// curvature by up to `curvature`, then is adjusted to touch `u` from the requested
/// side over each window. A violation (`φ_t` above the right-hand side for `Above`,
/// below it for `Below`, by more than `tol`) counts only when every window agrees.
pub fn touching_test(f: &SpaceTimeField, mode: TouchingMode, opts: &TouchingOptions) -> Result<TouchingReport> {
    let g = f.grid();
    let d = g.dim();
    let h = g.h();
    let tol = opts.tol.unwrap_or(5.0 * h);
    if opts.windows.is_empty() || opts.windows.contains(&0) {
        return Err(invalid("windows", "need at least one positive half-width"));
    }
    if !(tol >= 0.0) || !(opts.slope_noise >= 0.0) || !(opts.curvature >= 0.0) {
        return Err(invalid("touching options", "tolerance and perturbations must be nonnegative"));
    }
    let smax = *opts.windows.iter().max().expect("nonempty");
    let pts = admissible_points(f, smax);
    if pts.is_empty() {
        return Err(PmeError::InsufficientData(format!(
            "no window of half-width {smax} lies inside the positivity set"
        )));
    }
    let sign = match mode {
        TouchingMode::Above => 1.0,
        TouchingMode::Below => -1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = TouchingReport {
        mode,
        tol,
        windows: opts.windows.clone(),
        requested: opts.count,
        touched: 0,
        skipped: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        examples: Vec::new(),
    };
    for _ in 0..opts.count {
        let (k, c) = pts[rng.gen_range(0..pts.len())];
        let u = f.u[k].values();
        let mut p = vec![0.0; d];
        let mut hess = [[0.0; 2]; 2];
        for a in 0..d {
            let sa = g.stride(a);
            p[a] = (u[c + sa] - u[c - sa]) / (2.0 * h) + opts.slope_noise * h * rng.gen_range(-1.0..=1.0);
            hess[a][a] = (u[c + sa] - 2.0 * u[c] + u[c - sa]) / (h * h) + sign * opts.curvature * rng.gen_range(0.0..=1.0);
        }
        if d == 2 {
            let (s0, s1) = (g.stride(0), g.stride(1));
            let mixed = (u[c + s0 + s1] - u[c + s0 - s1] - u[c - s0 + s1] + u[c - s0 - s1]) / (4.0 * h * h);
            hess[0][1] = mixed;
            hess[1][0] = mixed;
        }
        let base = TouchingDescriptor {
            cell: c,
            snapshot: k,
            x0: g.center(c),
            t0: f.times[k],
            a: u[c],
            p,
            hessian: hess,
            q: 0.0,
        };
        let fitted: Option<Vec<TouchingDescriptor>> = opts.windows.iter().map(|&s| fit_window(f, &base, s, mode)).collect();
        let Some(fitted) = fitted else {
            report.skipped += 1;
            continue;
        };
        report.touched += 1;
        let agreed = fitted
            .iter()
            .map(|desc| sign * touching_margin(desc, f.m, &f.potential))
            .fold(f64::INFINITY, f64::min);
        report.worst_margin = report.worst_margin.max(agreed);
        if agreed > tol {
            report.violations += 1;
            if report.examples.len() < MAX_EXAMPLES {
                let widest = opts.windows.iter().position(|&s| s == smax).expect("present");
                report.examples.push(fitted[widest].clone());
            }
        }
    }
    if report.touched == 0 {
        report.worst_margin = 0.0;
    }
    Ok(report)
}

/// Whether a barrier placed below `u` at one snapshot stays below afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoCrossingReport {
    pub start_time: f64,
    /// Whether the barrier was strictly separated from `u` at the start: its support
    /// inside the interior of `supp u`, and strictly smaller there.
    pub strictly_below: bool,
    /// `max (barrier - u)_+` over later snapshots.
    pub max_crossing: f64,
    pub first_crossing_time: Option<f64>,
    pub tol: f64,
}

/// Sample a classical barrier against `u` from snapshot `start` on, and report how far
/// it rises above `u` afterwards. Crossings up to `tol` are ignored for the first time.
pub fn barrier_no_crossing(f: &SpaceTimeField, barrier: &dyn Evaluable, start: usize, tol: f64) -> Result<NoCrossingReport> {
    if start >= f.u.len() {
        return Err(invalid("start", format!("snapshot {start} of {}", f.u.len())));
    }
    let g = f.grid();
    let sample = |k: usize| -> Vec<f64> {
        (0..g.len())
            .map(|c| {
                let v = barrier.value(&g.center(c), f.times[k]);
                if v.is_finite() {
                    v.max(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let b0 = sample(start);
    let u0 = f.u[start].values();
    let strictly_below = (0..g.len()).filter(|&c| b0[c] > 0.0).all(|c| {
        let interior = g.neighbors(c).all(|j| u0[j] > 0.0);
        let edge = {
            let idx = g.unravel(c);
            (0..g.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == g.cells()[a])
        };
        interior && !edge && b0[c] < u0[c]
    });
    let mut max_crossing: f64 = 0.0;
    let mut first = None;
    for k in start + 1..f.u.len() {
        let b = sample(k);
        let over = b
            .iter()
            .zip(f.u[k].values())
            .map(|(bv, uv)| (bv - uv).max(0.0))
            .fold(0.0, f64::max);
        if over > tol && first.is_none() {
            first = Some(f.times[k]);
        }
        max_crossing = max_crossing.max(over);
    }
    Ok(NoCrossingReport {
        start_time: f.times[start],
        strictly_below,
        max_crossing,
        first_crossing_time: first,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{BarenblattParams, EquilibriumProfile};

    fn barenblatt_field(h_cells: usize, m: f64) -> (BarenblattParams, SpaceTimeField) {
        let p = BarenblattParams::new(1.0, 1.0, m, 1).unwrap();
        let g = Grid::line(-4.0, 4.0, h_cells).unwrap();
        let times: Vec<f64> = (0..=50).map(|i| 0.02 * i as f64).collect();
        let f = SpaceTimeField::sample(&p, &g, &times, m, Potential::zero()).unwrap();
        (p, f)
    }

    #[test]
    fn test_equality_case_with_analytic_derivatives() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        for (x, t) in [(0.3, 0.2), (-1.1, 0.7), (0.0, 0.0)] {
            let dv = p.derivatives(&[x], t).unwrap();
            let desc = TouchingDescriptor {
                cell: 0,
                snapshot: 0,
                x0: vec![x],
                t0: t,
                a: dv.value,
                p: dv.gradient.clone(),
                hessian: [[dv.laplacian, 0.0], [0.0, 0.0]],
                q: dv.time,
            };
            assert!(touching_margin(&desc, 2.0, &Potential::zero()).abs() < 1e-10);
        }
        // equilibrium at m = 2, where the divergence drift agrees with the pressure equation
        let phi = Potential::quadratic();
        let e = EquilibriumProfile::new(phi.clone(), 1.0, 2.0).unwrap();
        let dv = e.derivatives(&[0.4], 0.0).unwrap();
        let desc = TouchingDescriptor {
            cell: 0,
            snapshot: 0,
            x0: vec![0.4],
            t0: 0.0,
            a: dv.value,
            p: dv.gradient,
            hessian: [[-2.0, 0.0], [0.0, 0.0]],
            q: 0.0,
        };
        assert!(touching_margin(&desc, 2.0, &phi).abs() < 1e-12);
    }

    #[test]
    fn test_barenblatt_has_no_violations() {
        let (_, f) = barenblatt_field(800, 2.0);
        for mode in [TouchingMode::Above, TouchingMode::Below] {
            let r = touching_test(&f, mode, &TouchingOptions::new(200, 11)).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
            assert!(r.touched > 150);
            assert_eq!(r.tol, 5.0 * f.grid().h());
        }
    }

    #[test]
    fn test_time_shift_is_detected() {
        let (_, f) = barenblatt_field(800, 2.0);
        let c = 1.0;
        let shifted = f.with_time_shift(c).unwrap();
        let r = touching_test(&shifted, TouchingMode::Above, &TouchingOptions::new(200, 11)).unwrap();
        assert!(r.violations >= 1, "{r:?}");
        assert!(r.worst_margin > 0.5 * c && r.worst_margin < 1.5 * c, "{}", r.worst_margin);
        // from below, the shift only helps
        let r = touching_test(&shifted, TouchingMode::Below, &TouchingOptions::new(200, 11)).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn test_seed_reproducible() {
        let (_, f) = barenblatt_field(400, 2.0);
        let a = touching_test(&f, TouchingMode::Above, &TouchingOptions::new(50, 3)).unwrap();
        let b = touching_test(&f, TouchingMode::Above, &TouchingOptions::new(50, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn test_options_validation() {
        let (_, f) = barenblatt_field(400, 2.0);
        let mut o = TouchingOptions::new(5, 0);
        o.windows = vec![0];
        assert!(touching_test(&f, TouchingMode::Above, &o).is_err());
    }

    #[test]
    fn test_barenblatt_barrier_does_not_cross() {
        let (_, f) = barenblatt_field(800, 2.0);
        let small = BarenblattParams::new(1.0, 0.5, 2.0, 1).unwrap();
        let r = barrier_no_crossing(&f, &small, 0, 1e-12).unwrap();
        assert!(r.strictly_below);
        assert_eq!(r.max_crossing, 0.0);
        // a larger profile is not below and does cross
        let big = BarenblattParams::new(1.0, 1.5, 2.0, 1).unwrap();
        let r = barrier_no_crossing(&f, &big, 0, 1e-12).unwrap();
        assert!(!r.strictly_below && r.first_crossing_time.is_some());
    }
}
