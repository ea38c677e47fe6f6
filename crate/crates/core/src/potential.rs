//! Analytic drift potentials with exact value, gradient, Hessian and Laplacian.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PmeError, Result};
use crate::grid::Grid;

/// Value, gradient and Laplacian of a potential at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

/// A `C^2` drift potential.
///
/// Quadratic-type forms take an optional `center`; an empty center means the origin
/// in whatever dimension the potential is evaluated. `Polynomial` and `Tabulated`
/// are separable: the same one-dimensional profile is applied on every axis and summed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// `coeff * |x - center|^2`
    Quadratic {
        #[serde(default = "one")]
        coeff: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `1/2 (x - center)^T Q (x - center)` with symmetric `Q`.
    AnisotropicQuadratic {
        q: Vec<Vec<f64>>,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `scale * (sqrt(1 + |x - center|^2) - 1)`
    SmoothedCone {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `sum_axis sum_k coeffs[k] * x_axis^k`
    Polynomial { coeffs: Vec<f64> },
    /// Natural cubic spline through `(knots, values)`, extended linearly outside the knots
    /// (which keeps it `C^2`), applied on every axis and summed.
    Tabulated(Spline),
}

/// Natural cubic spline with precomputed knot second derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineSpec", into = "SplineSpec")]
pub struct Spline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplineSpec {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<SplineSpec> for Spline {
    type Error = PmeError;

    fn try_from(s: SplineSpec) -> Result<Self> {
        Spline::new(s.knots, s.values)
    }
}

impl From<Spline> for SplineSpec {
    fn from(s: Spline) -> Self {
        SplineSpec {
            knots: s.knots,
            values: s.values,
        }
    }
}

impl Spline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let second = spline_second_derivatives(&knots, &values)?;
        Ok(Spline {
            knots,
            values,
            second,
        })
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        spline(&self.knots, &self.values, &self.second, x)
    }
}

fn one() -> f64 {
    1.0
}

impl Potential {
    /// `|x|^2`
    pub fn quadratic() -> Self {
        Potential::Quadratic {
            coeff: 1.0,
            center: Vec::new(),
        }
    }

    /// `coeff |x - center|^2`
    pub fn quadratic_at(coeff: f64, center: Vec<f64>) -> Self {
        Potential::Quadratic { coeff, center }
    }

    /// The zero potential (pure porous medium equation).
    pub fn zero() -> Self {
        Potential::Quadratic {
            coeff: 0.0,
            center: Vec::new(),
        }
    }

    /// `sqrt(1 + |x|^2) - 1`
    pub fn smoothed_cone() -> Self {
        Potential::SmoothedCone {
            scale: 1.0,
            center: Vec::new(),
        }
    }

    pub fn anisotropic(q: Vec<Vec<f64>>) -> Result<Self> {
        let p = Potential::AnisotropicQuadratic {
            q,
            center: Vec::new(),
        };
        p.validate(match &p {
            Potential::AnisotropicQuadratic { q, .. } => q.len(),
            _ => unreachable!(),
        })?;
        Ok(p)
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Potential::Polynomial { coeffs }
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Potential::Tabulated(Spline::new(knots, values)?))
    }

    pub fn form_name(&self) -> &'static str {
        match self {
            Potential::Quadratic { .. } => "quadratic",
            Potential::AnisotropicQuadratic { .. } => "anisotropic_quadratic",
            Potential::SmoothedCone { .. } => "smoothed_cone",
            Potential::Polynomial { .. } => "polynomial",
            Potential::Tabulated { .. } => "tabulated",
        }
    }

    /// Whether the potential is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Quadratic { coeff, .. } => *coeff == 0.0,
            Potential::SmoothedCone { scale, .. } => *scale == 0.0,
            Potential::Polynomial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            _ => false,
        }
    }

    /// Check that the descriptor is usable in dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let check_center = |c: &Vec<f64>| {
            if !c.is_empty() && c.len() != d {
                Err(invalid("center", format!("has {} entries for dimension {d}", c.len())))
            } else {
                Ok(())
            }
        };
        match self {
            Potential::Quadratic { coeff, center } => {
                if !coeff.is_finite() {
                    return Err(invalid("coeff", "must be finite"));
                }
                check_center(center)
            }
            Potential::SmoothedCone { scale, center } => {
                if !scale.is_finite() {
                    return Err(invalid("scale", "must be finite"));
                }
                check_center(center)
            }
            Potential::AnisotropicQuadratic { q, center } => {
                if q.len() != d || q.iter().any(|r| r.len() != d) {
                    return Err(invalid("q", format!("must be a {d}x{d} matrix")));
                }
                for i in 0..d {
                    for j in 0..d {
                        if (q[i][j] - q[j][i]).abs() > 1e-14 * (1.0 + q[i][j].abs()) {
                            return Err(invalid("q", "must be symmetric"));
                        }
                    }
                }
                check_center(center)
            }
            Potential::Polynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("coeffs", "must be finite"));
                }
                Ok(())
            }
            Potential::Tabulated(_) => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Quadratic { coeff, center } => coeff * dist2(x, center),
            Potential::AnisotropicQuadratic { q, center } => {
                let y = shifted(x, center);
                let mut s = 0.0;
                for i in 0..y.len() {
                    for j in 0..y.len() {
                        s += y[i] * q[i][j] * y[j];
                    }
                }
                0.5 * s
            }
            Potential::SmoothedCone { scale, center } => {
                scale * ((1.0 + dist2(x, center)).sqrt() - 1.0)
            }
            Potential::Polynomial { coeffs } => x.iter().map(|&xa| poly(coeffs, xa, 0)).sum(),
            Potential::Tabulated(sp) => x.iter().map(|&xa| sp.eval(xa).0).sum(),
        }
    }

    /// Partial derivative along `axis`.
    pub fn partial(&self, x: &[f64], axis: usize) -> f64 {
        match self {
            Potential::Quadratic { coeff, center } => 2.0 * coeff * (x[axis] - at(center, axis)),
            Potential::AnisotropicQuadratic { q, center } => {
                let y = shifted(x, center);
                (0..y.len()).map(|j| q[axis][j] * y[j]).sum()
            }
            Potential::SmoothedCone { scale, center } => {
                scale * (x[axis] - at(center, axis)) / (1.0 + dist2(x, center)).sqrt()
            }
            Potential::Polynomial { coeffs } => poly(coeffs, x[axis], 1),
            Potential::Tabulated(sp) => sp.eval(x[axis]).1,
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|a| self.partial(x, a)).collect()
    }

    /// Hessian as a 2x2 array; only the leading `d x d` block is meaningful.
    pub fn hessian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let d = x.len();
        let mut h = [[0.0; 2]; 2];
        match self {
            Potential::Quadratic { coeff, .. } => {
                for (i, row) in h.iter_mut().enumerate().take(d) {
                    row[i] = 2.0 * coeff;
                }
            }
            Potential::AnisotropicQuadratic { q, .. } => {
                for i in 0..d {
                    for j in 0..d {
                        h[i][j] = q[i][j];
                    }
                }
            }
            Potential::SmoothedCone { scale, center } => {
                let y = shifted(x, center);
                let s = 1.0 + dist2(x, center);
                let r = s.sqrt();
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = scale * (delta / r - y[i] * y[j] / (s * r));
                    }
                }
            }
            Potential::Polynomial { coeffs } => {
                for (i, row) in h.iter_mut().enumerate().take(d) {
                    row[i] = poly(coeffs, x[i], 2);
                }
            }
            Potential::Tabulated(sp) => {
                for (i, row) in h.iter_mut().enumerate().take(d) {
                    row[i] = sp.eval(x[i]).2;
                }
            }
        }
        h
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let h = self.hessian(x);
        (0..x.len()).map(|i| h[i][i]).sum()
    }

    /// Analytic value, gradient and Laplacian.
    pub fn probe(&self, x: &[f64]) -> Probe {
        Probe {
            value: self.value(x),
            gradient: self.gradient(x),
            laplacian: self.laplacian(x),
        }
    }

    /// Global minimum of the Hessian's smallest eigenvalue over the grid box,
    /// exact for every form up to root finding.
    fn convexity_modulus(&self, grid: &Grid) -> f64 {
        let d = grid.dim();
        match self {
            Potential::Quadratic { coeff, .. } => 2.0 * coeff,
            Potential::AnisotropicQuadratic { q, .. } => min_eigen(q, d),
            Potential::SmoothedCone { scale, center } => {
                // smallest eigenvalue (1+r^2)^(-3/2) along the radial direction, largest r at a corner
                let mut r2: f64 = 0.0;
                for a in 0..d {
                    let c = at(center, a);
                    let far = (grid.lower()[a] - c).abs().max((grid.upper()[a] - c).abs());
                    r2 += far * far;
                }
                if *scale >= 0.0 {
                    scale * (1.0 + r2).powf(-1.5)
                } else {
                    *scale
                }
            }
            Potential::Polynomial { coeffs } => (0..d)
                .map(|a| poly_min_second(coeffs, grid.lower()[a], grid.upper()[a]))
                .fold(f64::INFINITY, f64::min),
            Potential::Tabulated(sp) => (0..d)
                .map(|a| {
                    let (lo, hi) = (grid.lower()[a], grid.upper()[a]);
                    // second derivative is piecewise linear: extremes at knots or ends
                    let mut m = sp.eval(lo).2.min(sp.eval(hi).2);
                    for (k, s) in sp.knots.iter().zip(&sp.second) {
                        if *k >= lo && *k <= hi {
                            m = m.min(*s);
                        }
                    }
                    m
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Metadata over the grid box. `exclusion_radius` is the radius of the ball around
    /// the minimizer excluded when computing `a_min`.
    pub fn metadata(&self, grid: &Grid, exclusion_radius: f64) -> Result<PotentialMeta> {
        self.validate(grid.dim())?;
        let k0 = self.convexity_modulus(grid);
        // dense lattice: four samples per cell per axis
        let fine = Grid::new(
            grid.lower().to_vec(),
            grid.upper().to_vec(),
            grid.cells().iter().map(|n| 4 * n).collect(),
        )?;
        let mut m1 = f64::NEG_INFINITY;
        let mut best = (f64::INFINITY, Vec::new());
        for k in 0..fine.len() {
            let x = fine.center(k);
            m1 = m1.max(self.laplacian(&x));
            let v = self.value(&x);
            if v < best.0 {
                best = (v, x);
            }
        }
        let minimizer = match self {
            Potential::Quadratic { center, .. }
            | Potential::AnisotropicQuadratic { center, .. }
            | Potential::SmoothedCone { center, .. }
                if k0 > 0.0 =>
            {
                (0..grid.dim()).map(|a| at(center, a)).collect()
            }
            _ => best.1,
        };
        let mut a_min = f64::INFINITY;
        for k in 0..fine.len() {
            let x = fine.center(k);
            if dist2(&x, &minimizer).sqrt() > exclusion_radius {
                a_min = a_min.min(norm(&self.gradient(&x)));
            }
        }
        Ok(PotentialMeta {
            k0: k0.max(0.0),
            strictly_convex: k0 > 0.0,
            m1,
            a_min,
            exclusion_radius,
            minimizer,
        })
    }

    /// `sup |Phi| + sup |grad Phi| + sup ||Hess Phi||` over the closed ball `B_radius(x0)`.
    ///
    /// Closed form for `Quadratic`; dense sampling of the ball otherwise.
    pub fn c2_norm(&self, x0: &[f64], radius: f64) -> f64 {
        if let Potential::Quadratic { coeff, center } = self {
            let r = dist2(x0, center).sqrt() + radius;
            let a = coeff.abs();
            return a * r * r + 2.0 * a * r + 2.0 * a;
        }
        let d = x0.len();
        let n: i64 = if d == 1 { 2000 } else { 200 };
        let step = radius / n as f64;
        let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
        let mut visit = |y: &[f64]| {
            s0 = s0.max(self.value(y).abs());
            s1 = s1.max(norm(&self.gradient(y)));
            s2 = s2.max(op_norm(&self.hessian(y), d));
        };
        if d == 1 {
            for i in -n..=n {
                visit(&[x0[0] + i as f64 * step]);
            }
        } else {
            for i in -n..=n {
                for j in -n..=n {
                    let (dx, dy) = (i as f64 * step, j as f64 * step);
                    if dx * dx + dy * dy <= radius * radius * (1.0 + 1e-12) {
                        visit(&[x0[0] + dx, x0[1] + dy]);
                    }
                }
            }
            // the boundary circle itself
            for k in 0..(8 * n) {
                let th = std::f64::consts::TAU * k as f64 / (8 * n) as f64;
                visit(&[x0[0] + radius * th.cos(), x0[1] + radius * th.sin()]);
            }
        }
        s0 + s1 + s2
    }
}

/// Probe with a box check.
pub fn potential_probe(phi: &Potential, grid: &Grid, x: &[f64]) -> Result<Probe> {
    if !grid.contains(x) {
        return Err(PmeError::OutOfDomain { point: x.to_vec() });
    }
    Ok(phi.probe(x))
}

/// Convexity and monotonicity data of a potential over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialMeta {
    /// Uniform convexity modulus (smallest Hessian eigenvalue over the box), clipped at 0.
    pub k0: f64,
    pub strictly_convex: bool,
    /// `max Laplacian` over the box.
    pub m1: f64,
    /// `inf |grad Phi|` over the box outside `B_exclusion_radius(minimizer)`.
    pub a_min: f64,
    pub exclusion_radius: f64,
    pub minimizer: Vec<f64>,
}

impl PotentialMeta {
    /// `|grad Phi| > 0` away from the minimizer.
    pub fn is_monotone(&self) -> bool {
        self.a_min > 0.0
    }
}

#[inline]
fn at(c: &[f64], a: usize) -> f64 {
    c.get(a).copied().unwrap_or(0.0)
}

#[inline]
fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(a, &xa)| {
            let y = xa - at(c, a);
            y * y
        })
        .sum()
}

fn shifted(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().enumerate().map(|(a, &xa)| xa - at(c, a)).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sym_eigen(h: &[[f64; 2]; 2], d: usize) -> (f64, f64) {
    if d == 1 {
        return (h[0][0], h[0][0]);
    }
    let (a, b, c) = (h[0][0], h[0][1], h[1][1]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - rad, mean + rad)
}

fn op_norm(h: &[[f64; 2]; 2], d: usize) -> f64 {
    let (lo, hi) = sym_eigen(h, d);
    lo.abs().max(hi.abs())
}

fn min_eigen(q: &[Vec<f64>], d: usize) -> f64 {
    let mut h = [[0.0; 2]; 2];
    for i in 0..d {
        for j in 0..d {
            h[i][j] = q[i][j];
        }
    }
    sym_eigen(&h, d).0
}

/// Smallest eigenvalue of a Hessian returned by [`Potential::hessian`].
pub fn hessian_min_eigen(h: &[[f64; 2]; 2], d: usize) -> f64 {
    sym_eigen(h, d).0
}

/// `deriv`-th derivative of `sum c_k x^k` by Horner's rule.
fn poly(coeffs: &[f64], x: f64, deriv: usize) -> f64 {
    let mut acc = 0.0;
    for k in (deriv..coeffs.len()).rev() {
        let mut f = 1.0;
        for j in 0..deriv {
            f *= (k - j) as f64;
        }
        acc = acc * x + f * coeffs[k];
    }
    acc
}

/// Minimum of the polynomial's second derivative on `[lo, hi]`: endpoints plus roots of
/// the third derivative located by sign scanning and bisection.
fn poly_min_second(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let n = 4096;
    let step = (hi - lo) / n as f64;
    let mut m = poly(coeffs, lo, 2).min(poly(coeffs, hi, 2));
    let mut prev = poly(coeffs, lo, 3);
    for i in 1..=n {
        let x = lo + i as f64 * step;
        let cur = poly(coeffs, x, 3);
        m = m.min(poly(coeffs, x, 2));
        if prev.signum() != cur.signum() && prev != 0.0 {
            let (mut a, mut b) = (x - step, x);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if poly(coeffs, mid, 3).signum() == prev.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            m = m.min(poly(coeffs, 0.5 * (a + b), 2));
        }
        prev = cur;
    }
    m
}

fn spline_second_derivatives(knots: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = knots.len();
    if n < 3 || values.len() != n {
        return Err(invalid("knots", "need at least 3 knots with matching values"));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("knots", "must be strictly increasing"));
    }
    // natural spline: M_0 = M_{n-1} = 0, Thomas algorithm on the interior
    let mut m = vec![0.0; n];
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 1..n - 1 {
        let (h0, h1) = (knots[i] - knots[i - 1], knots[i + 1] - knots[i]);
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
    }
    for i in 1..k {
        let lower = knots[i + 1] - knots[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
    Ok(m)
}

/// Value, first and second derivative of the natural spline at `x`.
fn spline(knots: &[f64], values: &[f64], second: &[f64], x: f64) -> (f64, f64, f64) {
    let n = knots.len();
    let seg = |i: usize, x: f64| {
        let h = knots[i + 1] - knots[i];
        let a = (knots[i + 1] - x) / h;
        let b = (x - knots[i]) / h;
        let v = a * values[i]
            + b * values[i + 1]
            + ((a * a * a - a) * second[i] + (b * b * b - b) * second[i + 1]) * h * h / 6.0;
        let dv = (values[i + 1] - values[i]) / h
            + (-(3.0 * a * a - 1.0) * second[i] + (3.0 * b * b - 1.0) * second[i + 1]) * h / 6.0;
        let ddv = a * second[i] + b * second[i + 1];
        (v, dv, ddv)
    };
    if x <= knots[0] {
        let (v, dv, _) = seg(0, knots[0]);
        (v + dv * (x - knots[0]), dv, 0.0)
    } else if x >= knots[n - 1] {
        let (v, dv, _) = seg(n - 2, knots[n - 1]);
        (v + dv * (x - knots[n - 1]), dv, 0.0)
    } else {
        let i = knots.partition_point(|&k| k <= x).saturating_sub(1).min(n - 2);
        seg(i, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_forms() -> Vec<Potential> {
        vec![
            Potential::quadratic(),
            Potential::quadratic_at(0.7, vec![0.2]),
            Potential::smoothed_cone(),
            Potential::polynomial(vec![0.0, 0.1, 1.0, 0.0, 0.25]),
            Potential::tabulated(
                vec![-3.0, -1.5, 0.0, 1.5, 3.0],
                vec![9.0, 2.25, 0.0, 2.25, 9.0],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn test_probe_examples() {
        let g1 = Grid::line(-2.0, 2.0, 40).unwrap();
        let p = potential_probe(&Potential::quadratic(), &g1, &[0.0]).unwrap();
        assert_eq!((p.value, p.gradient.clone(), p.laplacian), (0.0, vec![0.0], 2.0));
        let g2 = Grid::square(-2.0, 2.0, 40).unwrap();
        let p = potential_probe(&Potential::quadratic(), &g2, &[0.0, 0.0]).unwrap();
        assert_eq!(p.laplacian, 4.0);

        let p = potential_probe(&Potential::quadratic(), &g1, &[1.5]).unwrap();
        assert!((p.value - 2.25).abs() < 1e-15);
        assert!((p.gradient[0] - 3.0).abs() < 1e-15);
        assert!((p.laplacian - 2.0).abs() < 1e-15);

        let p = potential_probe(&Potential::smoothed_cone(), &g1, &[0.0]).unwrap();
        assert_eq!((p.value, p.gradient[0], p.laplacian), (0.0, 0.0, 1.0));

        assert!(matches!(
            potential_probe(&Potential::quadratic(), &g1, &[2.5]),
            Err(PmeError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn test_gradient_matches_centered_differences() {
        // error ratio of O(h^2) differences under halving
        let x1 = [0.37];
        let x2 = [0.37, -0.61];
        for phi in all_forms() {
            for x in [&x1[..], &x2[..]] {
                for axis in 0..x.len() {
                    let exact = phi.partial(x, axis);
                    let fd = |h: f64| {
                        let mut p = x.to_vec();
                        let mut m = x.to_vec();
                        p[axis] += h;
                        m[axis] -= h;
                        (phi.value(&p) - phi.value(&m)) / (2.0 * h)
                    };
                    let e1 = (fd(1e-3) - exact).abs();
                    let e2 = (fd(5e-4) - exact).abs();
                    if e1 < 1e-11 {
                        // quadratic forms: differences are exact up to roundoff
                        continue;
                    }
                    let ratio = e1 / e2;
                    assert!(
                        (3.5..=4.5).contains(&ratio),
                        "{} axis {axis}: ratio {ratio}",
                        phi.form_name()
                    );
                }
            }
        }
    }

    #[test]
    fn test_hessian_matches_gradient_differences() {
        let x = [0.3, -0.8];
        for phi in all_forms() {
            let h = phi.hessian(&x);
            for i in 0..2 {
                for j in 0..2 {
                    let eps = 1e-5;
                    let mut p = x.to_vec();
                    let mut m = x.to_vec();
                    p[j] += eps;
                    m[j] -= eps;
                    let fd = (phi.partial(&p, i) - phi.partial(&m, i)) / (2.0 * eps);
                    assert!((fd - h[i][j]).abs() < 1e-6, "{}", phi.form_name());
                }
            }
        }
    }

    #[test]
    fn test_convexity_modulus_holds_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let aniso = Potential::anisotropic(vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        for d in [1usize, 2] {
            let g = if d == 1 {
                Grid::line(-3.0, 3.0, 60).unwrap()
            } else {
                Grid::square(-3.0, 3.0, 30).unwrap()
            };
            let mut forms = all_forms();
            if d == 2 {
                forms.push(aniso.clone());
            }
            for phi in forms.into_iter().filter(|p| p.validate(d).is_ok()) {
                let meta = phi.metadata(&g, 0.1).unwrap();
                if !meta.strictly_convex {
                    continue;
                }
                for _ in 0..1000 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                    let h = phi.hessian(&x);
                    let mut q = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            q += x[i] * h[i][j] * x[j];
                        }
                    }
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    assert!(q >= (meta.k0 - 1e-9) * r2, "{} at {x:?}", phi.form_name());
                }
            }
        }
    }

    #[test]
    fn test_metadata_closed_forms() {
        let g = Grid::line(-2.0, 2.0, 40).unwrap();
        let m = Potential::quadratic().metadata(&g, 0.1).unwrap();
        assert_eq!(m.k0, 2.0);
        assert!((m.m1 - 2.0).abs() < 1e-12);
        assert_eq!(m.minimizer, vec![0.0]);
        // |grad| = 2|x| > 0.2 away from the exclusion ball, approached on the lattice
        assert!(m.a_min >= 0.2 && m.a_min < 0.25);
        assert!(m.is_monotone());

        let cone = Potential::smoothed_cone().metadata(&g, 0.1).unwrap();
        assert!((cone.k0 - 5f64.powf(-1.5)).abs() < 1e-15);
        assert!(cone.m1 <= 1.0 && cone.m1 > 0.999);
    }

    #[test]
    fn test_spline_reproduces_knots_and_is_c2() {
        let phi = Potential::tabulated(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 1.0, 0.5, 2.0]).unwrap();
        if let Potential::Tabulated(sp) = &phi {
            for (k, v) in sp.knots.iter().zip(&sp.values) {
                assert!((sp.eval(*k).0 - v).abs() < 1e-14);
            }
            for &k in &sp.knots[1..sp.knots.len() - 1] {
                let l = sp.eval(k - 1e-12);
                let r = sp.eval(k + 1e-12);
                assert!((l.2 - r.2).abs() < 1e-9);
                assert!((l.1 - r.1).abs() < 1e-9);
            }
            // linear extension continues smoothly
            let e = sp.eval(4.0 + 1e-12);
            let i = sp.eval(4.0 - 1e-12);
            assert!((e.1 - i.1).abs() < 1e-9 && e.2.abs() < 1e-9 && i.2.abs() < 1e-9);
        }
    }

    #[test]
    fn test_c2_norm_quadratic_matches_sampling() {
        let phi = Potential::quadratic();
        let exact = phi.c2_norm(&[0.5, 0.0], 1.0);
        // sup|Phi| = 2.25, sup|grad| = 3, Hess = 2
        assert!((exact - 7.25).abs() < 1e-12);
        let same_as_poly = Potential::polynomial(vec![0.0, 0.0, 1.0]).c2_norm(&[0.5], 1.0);
        assert!((same_as_poly - 7.25).abs() < 1e-9);
    }

    #[test]
    fn test_serde_roundtrip_and_tags() {
        let phi = Potential::quadratic_at(2.0, vec![0.1]);
        let s = serde_json::to_string(&phi).unwrap();
        assert!(s.contains("\"form\":\"quadratic\""));
        let back: Potential = serde_json::from_str(&s).unwrap();
        assert_eq!(back, phi);

        let t: Potential =
            serde_json::from_str(r#"{"form":"tabulated","knots":[0,1,2],"values":[0,1,4]}"#).unwrap();
        assert!(t.validate(1).is_ok());
        assert!((t.value(&[1.0]) - 1.0).abs() < 1e-14);
        assert!(serde_json::from_str::<Potential>(r#"{"form":"tabulated","knots":[0,1],"values":[0,1]}"#).is_err());
        assert!(serde_json::from_str::<Potential>(r#"{"form":"quadratic","bogus":1}"#).is_err());
    }
}
