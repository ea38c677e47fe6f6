//! Free-boundary extraction, set distances, front velocities and exponential rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PmeError, Result};
use crate::field::{lp_distance, pressure_from_density, Norm, ScalarField};
use crate::grid::Grid;
use crate::potential::Potential;
use crate::solver::Trajectory;

/// Default relative extraction level: `eps_fb = FB_LEVEL * max u`.
pub const FB_LEVEL: f64 = 1e-3;

/// `FB_LEVEL * max u`.
pub fn default_threshold(u: &ScalarField) -> f64 {
    FB_LEVEL * u.max()
}

/// Sampled free boundary at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub t: f64,
    pub points: Vec<Vec<f64>>,
}

impl BoundarySet {
    pub fn new(t: f64, points: Vec<Vec<f64>>) -> Self {
        BoundarySet { t, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Cells with `u > eps`.
pub fn positivity_set(u: &ScalarField, eps: f64) -> Result<Vec<bool>> {
    if !(eps >= 0.0) {
        return Err(invalid("eps_fb", format!("must be nonnegative, got {eps}")));
    }
    Ok(u.values().iter().map(|&v| v > eps).collect())
}

/// One point per face separating a cell with `u > eps` from one with `u ≤ eps`,
/// placed at the linear-interpolation root of `u - eps` along the face normal.
pub fn extract_boundary(u: &ScalarField, eps: f64, t: f64) -> Result<BoundarySet> {
    let mask = positivity_set(u, eps)?;
    let count = mask.iter().filter(|b| **b).count();
    if count == 0 {
        return Err(PmeError::NoBoundary("empty"));
    }
    if count == mask.len() {
        return Err(PmeError::NoBoundary("the whole grid"));
    }
    let g = u.grid();
    let v = u.values();
    let mut points = Vec::new();
    for k in 0..g.len() {
        let idx = g.unravel(k);
        for a in 0..g.dim() {
            if idx[a] + 1 >= g.cells()[a] {
                continue;
            }
            let j = k + g.stride(a);
            if mask[k] == mask[j] {
                continue;
            }
            let (inside, outside) = if mask[k] { (k, j) } else { (j, k) };
            let (ui, uo) = (v[inside] - eps, v[outside] - eps);
            let frac = ui / (ui - uo);
            let xi = g.center(inside);
            let xo = g.center(outside);
            points.push(xi.iter().zip(&xo).map(|(p, q)| p + frac * (q - p)).collect());
        }
    }
    Ok(BoundarySet { t, points })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max_{a ∈ A} min_{b ∈ B} |a - b|`.
pub fn sup_distance(a: &BoundarySet, b: &BoundarySet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PmeError::EmptySet);
    }
    Ok(a.points
        .iter()
        .map(|p| b.points.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

pub fn hausdorff_distance(a: &BoundarySet, b: &BoundarySet) -> Result<f64> {
    Ok(sup_distance(a, b)?.max(sup_distance(b, a)?))
}

/// Boundary extracted at `eps` and `2 eps`, with their Hausdorff gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub eps: f64,
    pub gap: f64,
    /// Gap exceeds two cell widths.
    pub flagged: bool,
}

pub fn threshold_check(u: &ScalarField, eps: f64) -> Result<ThresholdCheck> {
    let a = extract_boundary(u, eps, 0.0)?;
    let b = extract_boundary(u, 2.0 * eps, 0.0)?;
    let gap = hausdorff_distance(&a, &b)?;
    Ok(ThresholdCheck {
        eps,
        gap,
        flagged: gap > 2.0 * u.grid().h(),
    })
}

/// Normal speed from the velocity law `|Du| + DPhi · Du/|Du|`.
///
/// Positive values mean the positivity set expands.
pub fn front_velocity_law(du: &[f64], dphi: &[f64]) -> Result<f64> {
    let n = du.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(PmeError::Undefined("velocity law needs Du != 0".into()));
    }
    Ok(n + dphi.iter().zip(du).map(|(a, b)| a * b).sum::<f64>() / n)
}

/// Front velocity at a boundary point: measured displacement and the velocity law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    /// Displacement along the outward normal per unit time; `None` when the point
    /// has no match in the neighbouring snapshots.
    pub measured: Option<f64>,
    pub theoretical: f64,
    /// Outward unit normal `-Du/|Du|`.
    pub normal: Vec<f64>,
}

/// Least-squares plane through the cells with `u > eps` at distance `[inner, outer]`
/// from `p`, optionally restricted to the half-space `(x - p)·dir > 0`.
fn plane_gradient(u: &ScalarField, eps: f64, p: &[f64], inner: f64, outer: f64, dir: Option<&[f64]>) -> Option<Vec<f64>> {
    let g = u.grid();
    let d = g.dim();
    // normal equations for [c, g_1, .., g_d]
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let mut count = 0;
    for k in 0..g.len() {
        let uv = u.values()[k];
        if uv <= eps {
            continue;
        }
        let x = g.center(k);
        let r = dist(&x, p);
        if r > outer || r < inner {
            continue;
        }
        if let Some(dir) = dir {
            if x.iter().zip(p).zip(dir).map(|((xi, pi), di)| (xi - pi) * di).sum::<f64>() <= 0.0 {
                continue;
            }
        }
        let mut row = [1.0, 0.0, 0.0];
        for a in 0..d {
            row[a + 1] = (x[a] - p[a]) / g.h();
        }
        for i in 0..=d {
            for j in 0..=d {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * uv;
        }
        count += 1;
    }
    if count < d + 1 {
        return None;
    }
    let sol = solve_small(&ata, &atb, d + 1)?;
    Some((0..d).map(|a| sol[a + 1] / g.h()).collect())
}

/// Interior gradient at a boundary point.
///
/// The last couple of cells behind a discrete front are rounded off by the scheme,
/// so a plane fitted there underestimates the slope at O(1) relative error on every
/// grid. A nearby fit only fixes the inward direction; the slope comes from cells
/// `3h` to `10h` inside.
fn one_sided_gradient(u: &ScalarField, eps: f64, p: &[f64]) -> Option<Vec<f64>> {
    let h = u.grid().h();
    let rough = plane_gradient(u, eps, p, 0.0, 2.5 * h, None)?;
    plane_gradient(u, eps, p, 3.0 * h, 10.0 * h, Some(&rough)).or(Some(rough))
}

fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<Vec<f64>> {
    let mut m = *a;
    let mut r = *b;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, piv);
        r.swap(c, piv);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            for j in c..n {
                m[i][j] -= f * m[c][j];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

/// Front velocity at boundary point `p` of snapshot `k`.
///
/// The measured value is a centered difference of the signed displacement along the
/// outward normal to the nearest boundary point of snapshots `k ± 1` (one-sided at the
/// ends). A neighbour whose nearest point lies farther than `max_match` is unmatched.
pub fn normal_velocity_estimate(traj: &Trajectory, k: usize, p: &[f64], max_match: f64) -> Result<VelocityEstimate> {
    let n = traj.snapshots.len();
    if k >= n || n < 2 {
        return Err(PmeError::InsufficientData(format!("snapshot {k} of {n} has no neighbour")));
    }
    let m = traj.config.m;
    let pressure = |j: usize| pressure_from_density(&traj.snapshots[j].rho, m);
    let u = pressure(k)?;
    let eps = default_threshold(&u);
    let du = one_sided_gradient(&u, eps, p)
        .ok_or_else(|| PmeError::Undefined(format!("no interior cells near {p:?}")))?;
    let dphi = traj.potential.gradient(p);
    let theoretical = front_velocity_law(&du, &dphi)?;
    let nd = du.iter().map(|x| x * x).sum::<f64>().sqrt();
    let normal: Vec<f64> = du.iter().map(|x| -x / nd).collect();

    let offset = |j: usize| -> Result<Option<f64>> {
        let uj = pressure(j)?;
        let set = match extract_boundary(&uj, default_threshold(&uj), traj.snapshots[j].t) {
            Ok(s) => s,
            Err(PmeError::NoBoundary(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let q = set
            .points
            .iter()
            .min_by(|a, b| dist(a, p).total_cmp(&dist(b, p)))
            .expect("nonempty boundary");
        if dist(q, p) > max_match {
            return Ok(None);
        }
        Ok(Some(q.iter().zip(p).zip(&normal).map(|((qi, pi), ni)| (qi - pi) * ni).sum()))
    };
    let t = |j: usize| traj.snapshots[j].t;
    let lo = k.saturating_sub(1);
    let hi = (k + 1).min(n - 1);
    let measured = match (lo < k, hi > k) {
        (true, true) => match (offset(lo)?, offset(hi)?) {
            (Some(a), Some(b)) => Some((b - a) / (t(hi) - t(lo))),
            _ => None,
        },
        (false, true) => offset(hi)?.map(|b| b / (t(hi) - t(k))),
        (true, false) => offset(lo)?.map(|a| -a / (t(k) - t(lo))),
        (false, false) => None,
    };
    Ok(VelocityEstimate {
        measured,
        theoretical,
        normal,
    })
}

/// Fit of `d(t) ≈ K e^{-alpha t}` on a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
    pub r2: f64,
    pub t_a: f64,
    pub t_b: f64,
}

/// The last 60% of the sampled time range.
pub fn default_window(ts: &[f64]) -> Option<(f64, f64)> {
    let (a, b) = (*ts.first()?, *ts.last()?);
    Some((a + 0.4 * (b - a), b))
}

/// Least squares on `log d` against `t` over samples with `t` in `window` (inclusive).
pub fn fit_exponential_rate(ts: &[f64], ds: &[f64], window: Option<(f64, f64)>) -> Result<RateFit> {
    if ts.len() != ds.len() {
        return Err(invalid("series", "time and value lengths differ"));
    }
    let (ta, tb) = match window {
        Some(w) => w,
        None => default_window(ts).ok_or_else(|| PmeError::InsufficientData("empty series".into()))?,
    };
    if !(ta < tb) {
        return Err(invalid("window", format!("[{ta}, {tb}] is empty")));
    }
    let slack = 1e-12 * (tb - ta).abs().max(1.0);
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ds)
        .filter(|(t, _)| **t >= ta - slack && **t <= tb + slack)
        .map(|(t, d)| (*t, *d))
        .collect();
    if pts.len() < 5 {
        return Err(PmeError::InsufficientData(format!(
            "{} samples in [{ta}, {tb}], need at least 5",
            pts.len()
        )));
    }
    if let Some((t, d)) = pts.iter().find(|(_, d)| !(*d > 0.0)) {
        return Err(invalid("series", format!("value {d} at t = {t} is not positive")));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((t, _), y) in pts.iter().zip(&ys) {
        let (dx, dy) = (t - tm, y - ym);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss_res: f64 = pts
        .iter()
        .zip(&ys)
        .map(|((t, _), y)| (y - intercept - slope * t).powi(2))
        .sum();
    let r2 = if syy <= f64::EPSILON * ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        k: intercept.exp(),
        alpha: -slope,
        r2,
        t_a: ta,
        t_b: tb,
    })
}

/// One row of the distance-to-equilibrium series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub t: f64,
    /// `L¹` distance of the density to the equilibrium density.
    pub l1_dist: f64,
    /// One-sided distance from the current free boundary to the equilibrium one.
    pub sup_dist_fb: f64,
    pub hausdorff_fb: f64,
    /// The two-threshold extraction check failed for this snapshot.
    pub flagged: bool,
}

/// Distances of every snapshot of `traj` to the equilibrium pressure `u_inf`
/// (sampled on the same grid), each boundary extracted at its own default level.
pub fn distance_series(traj: &Trajectory, u_inf: &ScalarField) -> Result<Vec<DistanceRow>> {
    let m = traj.config.m;
    let rho_inf = crate::field::density_from_pressure(u_inf, m)?;
    let gamma_inf = extract_boundary(u_inf, default_threshold(u_inf), f64::INFINITY)?;
    traj.snapshots
        .iter()
        .map(|s| {
            let u = pressure_from_density(&s.rho, m)?;
            let eps = default_threshold(&u);
            let gamma = extract_boundary(&u, eps, s.t)?;
            Ok(DistanceRow {
                t: s.t,
                l1_dist: lp_distance(&s.rho, &rho_inf, Norm::L1)?,
                sup_dist_fb: sup_distance(&gamma, &gamma_inf)?,
                hausdorff_fb: hausdorff_distance(&gamma, &gamma_inf)?,
                flagged: threshold_check(&u, eps)?.flagged,
            })
        })
        .collect()
}

/// Largest-magnitude gradient of `phi` on the grid (used for velocity bounds).
pub fn max_drift_speed(phi: &Potential, grid: &Grid) -> f64 {
    (0..grid.len())
        .map(|k| crate::potential::norm(&phi.gradient(&grid.center(k))))
        .fold(0.0, f64::max)
}
