use serde::{Deserialize, Serialize};

use super::residual::{pmed_residual, pmed_residual_trajectory, ResidualSample, ResidualStats};
use crate::error::{invalid, PmeError, Result};
use crate::exact::Evaluable;
use crate::freeboundary::{
    default_threshold, extract_boundary, front_velocity_law, hausdorff_distance, normal_velocity_estimate,
};
use crate::field::pressure_from_density;
use crate::potential::Potential;
use crate::solver::Trajectory;

/// Default tolerance for candidates with analytic derivatives.
pub const ANALYTIC_TOL: f64 = 1e-10;

/// Front gradients at or below this size count as `|Du| = 0`.
const DEGENERATE_GRADIENT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Subsolution,
    Supersolution,
    Solution,
    Neither,
    Inconclusive,
}

impl Verdict {
    fn from_sides(sub: bool, sup: bool) -> Self {
        match (sub, sup) {
            (true, true) => Verdict::Solution,
            (true, false) => Verdict::Subsolution,
            (false, true) => Verdict::Supersolution,
            (false, false) => Verdict::Neither,
        }
    }

    pub fn is_supersolution(self) -> bool {
        matches!(self, Verdict::Supersolution | Verdict::Solution)
    }

    pub fn is_subsolution(self) -> bool {
        matches!(self, Verdict::Subsolution | Verdict::Solution)
    }
}

/// Sampling region for an analytic candidate: a ball at a set of times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub center: Vec<f64>,
    pub radius: f64,
    pub times: Vec<f64>,
    /// Lattice points per axis across the bounding cube of the ball.
    #[serde(default = "default_points")]
    pub points_per_axis: usize,
    /// Rays cast from the center to locate front points (ignored in 1D, which uses both directions).
    #[serde(default = "default_rays")]
    pub rays: usize,
}

fn default_points() -> usize {
    101
}

fn default_rays() -> usize {
    32
}

impl Domain {
    pub fn new(center: Vec<f64>, radius: f64, times: Vec<f64>) -> Self {
        Domain {
            center,
            radius,
            times,
            points_per_axis: default_points(),
            rays: default_rays(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.center.len()) {
            return Err(invalid("domain.center", "dimension must be 1 or 2"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid("domain.radius", "must be positive"));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("domain.times", "need at least one finite time"));
        }
        if self.points_per_axis < 2 {
            return Err(invalid("domain.points_per_axis", "need at least 2"));
        }
        if self.center.len() == 2 && self.rays < 1 {
            return Err(invalid("domain.rays", "need at least 1"));
        }
        Ok(())
    }

    fn lattice(&self) -> Vec<Vec<f64>> {
        let d = self.center.len();
        let n = self.points_per_axis;
        let coord = |i: usize| -self.radius + 2.0 * self.radius * i as f64 / (n - 1) as f64;
        let mut pts = Vec::new();
        let total = n.pow(d as u32);
        for flat in 0..total {
            let off: Vec<f64> = (0..d).map(|a| coord(flat / n.pow(a as u32) % n)).collect();
            if off.iter().map(|v| v * v).sum::<f64>() <= self.radius * self.radius {
                pts.push(off.iter().zip(&self.center).map(|(o, c)| o + c).collect());
            }
        }
        pts
    }

    fn directions(&self) -> Vec<Vec<f64>> {
        if self.center.len() == 1 {
            return vec![vec![1.0], vec![-1.0]];
        }
        (0..self.rays)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / self.rays as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    }
}

/// Statistics of the front gap `V - (|Du| + DPhi·Du/|Du|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontStats {
    pub count: usize,
    /// Front points skipped because `|Du| = 0` there.
    pub skipped_degenerate: usize,
    /// Front points without a velocity measurement (gridded candidates only).
    pub unmatched: usize,
    pub min_gap: f64,
    pub max_gap: f64,
}

impl FrontStats {
    fn from_gaps(gaps: &[f64], skipped_degenerate: usize, unmatched: usize) -> Self {
        FrontStats {
            count: gaps.len(),
            skipped_degenerate,
            unmatched,
            min_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().copied().fold(f64::INFINITY, f64::min) },
            max_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub tol: f64,
    pub interior: ResidualStats,
    pub front: FrontStats,
}

impl ClassificationReport {
    fn decide(interior: ResidualStats, front: FrontStats, tol: f64) -> Self {
        let verdict = if interior.count == 0 && front.count == 0 {
            Verdict::Inconclusive
        } else {
            let sub = interior.max <= tol && front.max_gap <= tol;
            let sup = interior.min >= -tol && front.min_gap >= -tol;
            Verdict::from_sides(sub, sup)
        };
        ClassificationReport {
            verdict,
            tol,
            interior,
            front,
        }
    }
}

/// Locate the front along a ray by scanning for a positivity change and bisecting.
/// Returns the point on the positive side.
fn front_on_ray(c: &dyn Evaluable, center: &[f64], dir: &[f64], radius: f64, t: f64) -> Option<Vec<f64>> {
    const SCAN: usize = 512;
    let at = |r: f64| -> Vec<f64> { center.iter().zip(dir).map(|(c, d)| c + r * d).collect() };
    let pos = |r: f64| c.value(&at(r), t) > 0.0;
    let mut prev = pos(0.0);
    for i in 1..=SCAN {
        let r = radius * i as f64 / SCAN as f64;
        let cur = pos(r);
        if cur != prev {
            let (mut inside, mut outside) = if prev {
                (r - radius / SCAN as f64, r)
            } else {
                (r, r - radius / SCAN as f64)
            };
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if pos(mid) {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            return Some(at(inside));
        }
        prev = cur;
    }
    None
}

/// One-sided front velocity: analytic `u_t/|Du|` when available, otherwise from the
/// displacement of the ray crossing between `t ± dt`.
fn front_gap(c: &dyn Evaluable, phi: &Potential, center: &[f64], dir: &[f64], radius: f64, x: &[f64], t: f64, step: f64) -> Option<std::result::Result<f64, ()>> {
    let (du, ut) = match c.derivatives(x, t) {
        Some(dv) => (dv.gradient, Some(dv.time)),
        None => (one_sided_gradient(c, x, t, step)?, None),
    };
    let nd = du.iter().map(|v| v * v).sum::<f64>().sqrt();
    // the bisected point sits a rounding error inside the front, so test against a floor
    if nd <= DEGENERATE_GRADIENT {
        return Some(Err(()));
    }
    let law = front_velocity_law(&du, &phi.gradient(x)).ok()?;
    let v = match ut {
        Some(ut) => ut / nd,
        None => {
            let r = |tt: f64| {
                front_on_ray(c, center, dir, radius, tt)
                    .map(|p| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            };
            let (rp, rm) = (r(t + step)?, r(t - step)?);
            // radial speed projected on the outward normal
            let cos: f64 = dir.iter().zip(&du).map(|(a, b)| -a * b / nd).sum();
            (rp - rm) / (2.0 * step) * cos
        }
    };
    Some(Ok(v - law))
}

/// Second-order one-sided differences pointing into the positivity set.
fn one_sided_gradient(c: &dyn Evaluable, x: &[f64], t: f64, h: f64) -> Option<Vec<f64>> {
    let mut g = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    let u0 = c.value(x, t);
    for a in 0..x.len() {
        let mut sample = |s: f64| {
            y[a] = x[a] + s;
            let v = c.value(&y, t);
            y[a] = x[a];
            v
        };
        let (p1, p2, m1, m2) = (sample(h), sample(2.0 * h), sample(-h), sample(-2.0 * h));
        let d = if p1 > 0.0 && p2 > 0.0 {
            (-3.0 * u0 + 4.0 * p1 - p2) / (2.0 * h)
        } else if m1 > 0.0 && m2 > 0.0 {
            (3.0 * u0 - 4.0 * m1 + m2) / (2.0 * h)
        } else {
            return None;
        };
        g.push(d);
    }
    Some(g)
}

/// Classify an evaluable candidate by its interior residual and front velocity gap.
///
/// Subsolution: residual `<= tol` and `V <= |Du| + DPhi·Du/|Du| + tol` at every sample;
/// supersolution: the reversed inequalities. `fd_step` is the finite-difference width used
/// when the candidate has no analytic derivatives.
pub fn classify(candidate: &dyn Evaluable, phi: &Potential, m: f64, domain: &Domain, tol: f64, fd_step: f64) -> Result<ClassificationReport> {
    domain.validate()?;
    if !(tol >= 0.0) {
        return Err(invalid("tol", "must be nonnegative"));
    }
    let lattice = domain.lattice();
    let mut samples = Vec::new();
    for &t in &domain.times {
        for x in &lattice {
            if candidate.value(x, t) > 0.0 {
                samples.push((x.clone(), t));
            }
        }
    }
    let res: Vec<ResidualSample> = pmed_residual(candidate, phi, m, &samples, fd_step)?;
    let interior = ResidualStats::from_samples(&res);

    let mut gaps = Vec::new();
    let mut degenerate = 0;
    let mut unmatched = 0;
    for &t in &domain.times {
        for dir in domain.directions() {
            let Some(x) = front_on_ray(candidate, &domain.center, &dir, domain.radius, t) else {
                continue;
            };
            match front_gap(candidate, phi, &domain.center, &dir, domain.radius, &x, t, fd_step) {
                Some(Ok(g)) => gaps.push(g),
                Some(Err(())) => degenerate += 1,
                None => unmatched += 1,
            }
        }
    }
    Ok(ClassificationReport::decide(
        interior,
        FrontStats::from_gaps(&gaps, degenerate, unmatched),
        tol,
    ))
}

/// Classify a computed trajectory. `tol` defaults to `5h`.
///
/// Interior residuals use masked centered stencils; front gaps compare the measured
/// normal displacement between snapshots with the velocity law evaluated from a
/// one-sided interior gradient.
pub fn classify_trajectory(traj: &Trajectory, tol: Option<f64>) -> Result<ClassificationReport> {
    let g = traj.grid();
    let h = g.h();
    let tol = tol.unwrap_or(5.0 * h);
    let n = traj.snapshots.len();
    if n < 3 {
        return Err(PmeError::InsufficientData(format!("{n} snapshots, need 3")));
    }
    let samples: Vec<(usize, usize)> = (1..n - 1).flat_map(|k| (0..g.len()).map(move |c| (k, c))).collect();
    let interior = ResidualStats::from_samples(&pmed_residual_trajectory(traj, &samples)?);

    let mut sets = Vec::with_capacity(n);
    for s in &traj.snapshots {
        let u = pressure_from_density(&s.rho, traj.config.m)?;
        sets.push(match extract_boundary(&u, default_threshold(&u), s.t) {
            Ok(b) => Some(b),
            Err(PmeError::NoBoundary(_)) => None,
            Err(e) => return Err(e),
        });
    }
    // A front point moves at most the Hausdorff distance between neighbouring
    // boundaries; a match farther away belongs to another piece of the front.
    let shift = |a: usize, b: usize| match (&sets[a], &sets[b]) {
        (Some(x), Some(y)) => hausdorff_distance(x, y).unwrap_or(0.0),
        _ => 0.0,
    };
    let mut gaps = Vec::new();
    let mut degenerate = 0;
    let mut unmatched = 0;
    for k in 1..n - 1 {
        let Some(set) = &sets[k] else { continue };
        let max_match = (4.0 * h).max(shift(k - 1, k).max(shift(k, k + 1)) + 2.0 * h);
        for p in &set.points {
            match normal_velocity_estimate(traj, k, p, max_match) {
                Ok(v) => match v.measured {
                    Some(vm) => gaps.push(vm - v.theoretical),
                    None => unmatched += 1,
                },
                Err(PmeError::Undefined(_)) => degenerate += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(ClassificationReport::decide(
        interior,
        FrontStats::from_gaps(&gaps, degenerate, unmatched),
        tol,
    ))
}
