use serde::{Deserialize, Serialize};

use super::{norm2, Derivatives, Evaluable, ExactSolution, Radial, TravelingWave, TravelingWaveParams};
use crate::error::{invalid, PmeError, Result};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMode {
    Sup,
    Inf,
}

/// Default lattice spacing for ball extrema when none is given.
const DEFAULT_SPACING: f64 = 2.5e-3;

fn check_conv_args(alpha: f64, t: f64, spacing: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(-1.0..=1.0).contains(&t) {
        return Err(invalid("t", format!("must lie in [-1, 1], got {t}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid("spacing", format!("must be positive, got {spacing}")));
    }
    Ok(())
}

/// `e^{-αt} sup_{B_{α-αt}(x)} u(·, t)`, sampled at lattice spacing `spacing`.
pub fn sup_convolution(u: &dyn Evaluable, alpha: f64, t: f64, x: &[f64], spacing: f64) -> Result<f64> {
    check_conv_args(alpha, t, spacing)?;
    let radius = alpha - alpha * t;
    Ok((-alpha * t).exp() * ball_extremum(u, x, t, radius, spacing, ConvolutionMode::Sup, true))
}

/// `e^{αt} inf_{B_{α-αt}(x)} u(·, t)`, sampled at lattice spacing `spacing`.
pub fn inf_convolution(u: &dyn Evaluable, alpha: f64, t: f64, x: &[f64], spacing: f64) -> Result<f64> {
    check_conv_args(alpha, t, spacing)?;
    let radius = alpha - alpha * t;
    Ok((alpha * t).exp() * ball_extremum(u, x, t, radius, spacing, ConvolutionMode::Inf, true))
}

/// Extremum of `u(·, t)` over the closed ball `B_radius(x)`.
///
/// Radially monotone functions are handled exactly through the segment toward (or
/// away from) their center. Otherwise the ball is sampled on a lattice plus its
/// boundary sphere, and the radial candidates are added when known.
pub(crate) fn ball_extremum(
    u: &dyn Evaluable,
    x: &[f64],
    t: f64,
    radius: f64,
    spacing: f64,
    mode: ConvolutionMode,
    use_radial: bool,
) -> f64 {
    let pick = |a: f64, b: f64| match mode {
        ConvolutionMode::Sup => a.max(b),
        ConvolutionMode::Inf => a.min(b),
    };
    let mut best = u.value(x, t);
    if radius <= 0.0 {
        return best;
    }
    let d = x.len();
    if let Some((center, dir)) = u.radial() {
        let c: Vec<f64> = if center.is_empty() { vec![0.0; d] } else { center };
        let off: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        let r = norm2(&off).sqrt();
        let e: Vec<f64> = if r > 0.0 {
            off.iter().map(|v| v / r).collect()
        } else {
            (0..d).map(|a| if a == 0 { 1.0 } else { 0.0 }).collect()
        };
        let at_radius = |rr: f64| -> Vec<f64> { c.iter().zip(&e).map(|(ci, ei)| ci + rr * ei).collect() };
        let near = at_radius((r - radius).max(0.0));
        let far = at_radius(r + radius);
        let (vn, vf) = (u.value(&near, t), u.value(&far, t));
        if use_radial {
            let toward_center = matches!(
                (mode, dir),
                (ConvolutionMode::Sup, Radial::Decreasing) | (ConvolutionMode::Inf, Radial::Increasing)
            );
            return pick(best, if toward_center { vn } else { vf });
        }
        best = pick(best, pick(vn, vf));
    }
    let n = (radius / spacing).ceil().max(1.0) as i64;
    let step = radius / n as f64;
    let r2max = radius * radius * (1.0 + 1e-12);
    let mut y = x.to_vec();
    match d {
        1 => {
            for i in -n..=n {
                y[0] = x[0] + i as f64 * step;
                best = pick(best, u.value(&y, t));
            }
        }
        2 => {
            for i in -n..=n {
                for j in -n..=n {
                    let (dx, dy) = (i as f64 * step, j as f64 * step);
                    if dx * dx + dy * dy <= r2max {
                        y[0] = x[0] + dx;
                        y[1] = x[1] + dy;
                        best = pick(best, u.value(&y, t));
                    }
                }
            }
            let ring = (std::f64::consts::TAU * radius / step).ceil().max(8.0) as usize;
            for k in 0..ring {
                let th = std::f64::consts::TAU * k as f64 / ring as f64;
                y[0] = x[0] + radius * th.cos();
                y[1] = x[1] + radius * th.sin();
                best = pick(best, u.value(&y, t));
            }
        }
        _ => {
            // axis directions only; higher dimensions are not gridded
            for a in 0..d {
                for sgn in [-1.0, 1.0] {
                    let mut z = x.to_vec();
                    z[a] += sgn * radius;
                    best = pick(best, u.value(&z, t));
                }
            }
        }
    }
    best
}

/// Sup- or inf-convolution of an exact solution, optionally viewed through the
/// hyperbolic rescaling `(x, t) ↦ (x₀ + α y - b(t - t₀), t₀ + α s)` of a drift frame.
///
/// In frame coordinates `y = (x - x₀ + b(t - t₀))/α`, `s = (t - t₀)/α` the value is
/// `α e^{∓βs} ext_{B_{β(1-s)}(y)} base(·, s)` with `β = rate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolvedBarrier {
    pub base: Box<ExactSolution>,
    pub mode: ConvolutionMode,
    /// Convolution parameter `β`: ball radius `β(1-s)`, exponential rate `β`.
    pub rate: f64,
    /// Hyperbolic rescaling `α`; 1 leaves coordinates unscaled.
    pub alpha: f64,
    pub anchor: Vec<f64>,
    pub anchor_t: f64,
    pub drift: Vec<f64>,
    /// Admissible set: `|x - anchor| ≤ radius`, `t ∈ window`.
    pub radius: f64,
    pub window: [f64; 2],
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

impl ConvolvedBarrier {
    /// Plain convolution of `base` with parameter `rate` on `B_radius(0) × window`.
    pub fn plain(base: ExactSolution, mode: ConvolutionMode, rate: f64, d: usize, radius: f64, window: [f64; 2]) -> Result<Self> {
        let b = ConvolvedBarrier {
            base: Box::new(base),
            mode,
            rate,
            alpha: 1.0,
            anchor: vec![0.0; d],
            anchor_t: 0.0,
            drift: vec![0.0; d],
            radius,
            window,
            spacing: DEFAULT_SPACING,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", format!("must be nonnegative, got {}", self.rate)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if self.anchor.len() != self.drift.len() {
            return Err(invalid("drift", "dimension differs from the anchor"));
        }
        if !(self.window[0] <= self.window[1]) || !(self.radius > 0.0) {
            return Err(invalid("window", "empty admissible set"));
        }
        // ball radius β(1 - s) must stay nonnegative over the window
        let s_max = (self.window[1] - self.anchor_t) / self.alpha;
        if self.rate * (1.0 - s_max) < 0.0 {
            return Err(invalid("window", format!("convolution radius turns negative at s = {s_max}")));
        }
        if !(self.spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn frame(&self, x: &[f64], t: f64) -> (Vec<f64>, f64) {
        let dt = t - self.anchor_t;
        let y = x
            .iter()
            .zip(&self.anchor)
            .zip(&self.drift)
            .map(|((xi, ai), bi)| (xi - ai + bi * dt) / self.alpha)
            .collect();
        (y, dt / self.alpha)
    }

    pub fn admissible(&self, x: &[f64], t: f64) -> bool {
        let off: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        x.len() == self.dim()
            && norm2(&off).sqrt() <= self.radius * (1.0 + 1e-12)
            && t >= self.window[0] - 1e-14
            && t <= self.window[1] + 1e-14
    }

    /// Value with the admissible-set check.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        if !self.admissible(x, t) {
            return Err(PmeError::OutsideAdmissible {
                point: x.to_vec(),
                t,
                reason: format!(
                    "outside B_{}({:?}) x {:?}",
                    self.radius, self.anchor, self.window
                ),
            });
        }
        Ok(self.raw_value(x, t))
    }

    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        let (y, s) = self.frame(x, t);
        let radius = (self.rate * (1.0 - s)).max(0.0);
        let ext = ball_extremum(self.base.as_ref(), &y, s, radius, self.spacing / self.alpha, self.mode, true);
        let factor = match self.mode {
            ConvolutionMode::Sup => (-self.rate * s).exp(),
            ConvolutionMode::Inf => (self.rate * s).exp(),
        };
        self.alpha * factor * ext
    }

    /// Normal speed of the free boundary toward the zero set, when the base is a
    /// traveling wave: `ω + β + b·DH/|DH|`. `x` fixes the normal direction.
    pub fn front_speed(&self, x: &[f64], t: f64) -> Option<f64> {
        let ExactSolution::TravelingWave(w) = self.base.as_ref() else {
            return None;
        };
        let (y, _) = self.frame(x, t);
        let r = norm2(&y).sqrt();
        if r == 0.0 {
            return None;
        }
        let bn: f64 = self.drift.iter().zip(&y).map(|(b, yi)| b * yi / r).sum();
        Some(w.params.omega() + self.rate + bn)
    }
}

impl Evaluable for ConvolvedBarrier {
    /// Unchecked value; `NaN` outside the admissible set.
    fn value(&self, x: &[f64], t: f64) -> f64 {
        if self.admissible(x, t) {
            self.raw_value(x, t)
        } else {
            f64::NAN
        }
    }

    /// Closed-form derivatives for the inf-convolved traveling wave, where the
    /// extremum sits on the segment toward the origin.
    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        let ExactSolution::TravelingWave(w) = self.base.as_ref() else {
            return None;
        };
        if self.mode != ConvolutionMode::Inf || !self.admissible(x, t) {
            return None;
        }
        let p = &w.params;
        let (y, s) = self.frame(x, t);
        let r = norm2(&y).sqrt();
        let beta = self.rate;
        let rad = beta * (1.0 - s);
        if r <= rad {
            return None;
        }
        // H = α e^{βs} A (r - β(1-s) + ωs - B), r = |y|
        let level = r - rad + p.omega() * s - p.b();
        if level < -1e-14 {
            return None;
        }
        let e = (beta * s).exp();
        let (a, al) = (p.a(), self.alpha);
        let d = y.len() as f64;
        let value = al * e * a * level.max(0.0);
        // ∂/∂x = (1/α) ∂/∂y, ∂/∂t = (1/α)(∂/∂s + b·∇_y)
        let gy: Vec<f64> = y.iter().map(|yi| al * e * a * yi / r).collect();
        let gradient: Vec<f64> = gy.iter().map(|g| g / al).collect();
        let laplacian = e * a * (d - 1.0) / (r * al);
        let ds = al * e * a * (beta * level.max(0.0) + beta + p.omega());
        let bg: f64 = self.drift.iter().zip(&gy).map(|(b, g)| b * g).sum();
        Some(Derivatives {
            value,
            gradient,
            laplacian,
            time: (ds + bg) / al,
        })
    }
}

/// Barrier built from a traveling wave in the frame moving with `b = ∇Φ(x₀)`,
/// inf-convolved at rate `Cα` where `C` is the `C²`-norm of `Φ` on `B₁(x₀)`.
///
/// The result is evaluable on `B_α(x₀) × [t₀ - α, t₀]`.
pub fn drift_frame_barrier(
    p: &TravelingWaveParams,
    x0: &[f64],
    t0: f64,
    alpha: f64,
    phi: &Potential,
) -> Result<ConvolvedBarrier> {
    phi.validate(x0.len())?;
    let c = phi.c2_norm(x0, 1.0);
    drift_frame_barrier_with(p, x0, t0, alpha, phi.gradient(x0), c)
}

/// Same as [`drift_frame_barrier`] with explicit drift `b` and constant `C`.
pub fn drift_frame_barrier_with(
    p: &TravelingWaveParams,
    x0: &[f64],
    t0: f64,
    alpha: f64,
    b: Vec<f64>,
    c: f64,
) -> Result<ConvolvedBarrier> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid("C", format!("must be nonnegative, got {c}")));
    }
    let barrier = ConvolvedBarrier {
        base: Box::new(ExactSolution::TravelingWave(TravelingWave::with_negative_window(p.clone()))),
        mode: ConvolutionMode::Inf,
        rate: c * alpha,
        alpha,
        anchor: x0.to_vec(),
        anchor_t: t0,
        drift: b,
        radius: alpha,
        window: [t0 - alpha, t0],
        spacing: DEFAULT_SPACING * alpha,
    };
    barrier.validate()?;
    Ok(barrier)
}
