use serde::{Deserialize, Serialize};

use super::{norm2, Derivatives, Evaluable, Radial};
use crate::error::{invalid, PmeError, Result};

/// Parameters of the spherical wave `H = A(|x| + ωt - B)₊` on `|x| ≤ R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WaveSpec", into = "WaveSpec")]
pub struct TravelingWaveParams {
    a: f64,
    omega: f64,
    b: f64,
    r: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct WaveSpec {
    a: f64,
    omega: f64,
    b: f64,
    r: f64,
}

impl TryFrom<WaveSpec> for TravelingWaveParams {
    type Error = PmeError;
    fn try_from(s: WaveSpec) -> Result<Self> {
        TravelingWaveParams::new(s.a, s.omega, s.b, s.r)
    }
}

impl From<TravelingWaveParams> for WaveSpec {
    fn from(p: TravelingWaveParams) -> Self {
        WaveSpec {
            a: p.a,
            omega: p.omega,
            b: p.b,
            r: p.r,
        }
    }
}

impl TravelingWaveParams {
    pub fn new(a: f64, omega: f64, b: f64, r: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("A", format!("must be positive, got {a}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid("omega", format!("must be positive, got {omega}")));
        }
        if !(r > 0.0 && r.is_finite() && b > r / 2.0 && b < r) {
            return Err(invalid("B", format!("need R/2 < B < R, got B = {b}, R = {r}")));
        }
        Ok(TravelingWaveParams { a, omega, b, r })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn r(&self) -> f64 {
        self.r
    }

    /// `ω/A - (1 + 2(m-1)(d-1)(R-B)/R)`; positive exactly when the wave is a supersolution.
    pub fn supersolution_margin(&self, m: f64, d: usize) -> f64 {
        let thresh = 1.0 + 2.0 * (m - 1.0) * (d as f64 - 1.0) * (self.r - self.b) / self.r;
        self.omega / self.a - thresh
    }

    /// The window `[(B-R)/ω, 0]` over which the front stays inside `|x| ≤ R`.
    pub fn negative_time_window(&self) -> [f64; 2] {
        [(self.b - self.r) / self.omega, 0.0]
    }

    fn level(&self, x: &[f64], t: f64) -> f64 {
        norm2(x).sqrt() + self.omega * t - self.b
    }
}

/// Wave parameters together with the time window on which it is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TravelingWave {
    #[serde(flatten)]
    pub params: TravelingWaveParams,
    pub window: [f64; 2],
}

impl TravelingWave {
    pub fn new(params: TravelingWaveParams, window: [f64; 2]) -> Result<Self> {
        if !(window[0] <= window[1]) {
            return Err(invalid("window", format!("{window:?} is not ordered")));
        }
        Ok(TravelingWave { params, window })
    }

    pub fn with_negative_window(params: TravelingWaveParams) -> Self {
        let window = params.negative_time_window();
        TravelingWave { params, window }
    }
}

/// `A(|x| + ωt - B)₊`, checked against `|x| ≤ R` and the time window.
pub fn traveling_wave_eval(w: &TravelingWave, x: &[f64], t: f64) -> Result<f64> {
    let p = &w.params;
    if norm2(x).sqrt() > p.r * (1.0 + 1e-12) {
        return Err(PmeError::OutsideAdmissible {
            point: x.to_vec(),
            t,
            reason: format!("|x| exceeds R = {}", p.r),
        });
    }
    if t < w.window[0] || t > w.window[1] {
        return Err(PmeError::OutsideAdmissible {
            point: x.to_vec(),
            t,
            reason: format!("t outside window {:?}", w.window),
        });
    }
    Ok(w.value(x, t))
}

/// Whether `ω/A > 1 + 2(m-1)(d-1)(R-B)/R`, with the margin.
pub fn traveling_wave_is_supersolution(p: &TravelingWaveParams, m: f64, d: usize) -> (bool, f64) {
    let margin = p.supersolution_margin(m, d);
    (margin > 0.0, margin)
}

impl Evaluable for TravelingWaveParams {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.a * self.level(x, t).max(0.0)
    }

    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        let r = norm2(x).sqrt();
        let lv = self.level(x, t);
        if r == 0.0 || lv < -1e-14 * self.b {
            return None;
        }
        Some(Derivatives {
            value: self.a * lv.max(0.0),
            gradient: x.iter().map(|xi| self.a * xi / r).collect(),
            laplacian: self.a * (x.len() as f64 - 1.0) / r,
            time: self.a * self.omega,
        })
    }

    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        // center dimension is resolved by the caller; an empty center means the origin
        Some((Vec::new(), Radial::Increasing))
    }
}

impl Evaluable for TravelingWave {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.params.value(x, t)
    }
    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        self.params.derivatives(x, t)
    }
    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        self.params.radial()
    }
}
