use serde::{Deserialize, Serialize};

use super::{norm2, Derivatives, Evaluable, Radial};
use crate::error::{invalid, PmeError, Result};
use crate::field::check_exponent;

/// Self-similar source-type solution of the pure porous medium equation in the
/// pressure variable: `B = (C s^{2λ} - K|x|²)₊ / s` with `s = t + τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BarenblattSpec", into = "BarenblattSpec")]
pub struct BarenblattParams {
    tau: f64,
    c: f64,
    m: f64,
    d: usize,
    lambda: f64,
    k: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarenblattSpec {
    tau: f64,
    c: f64,
    m: f64,
    d: usize,
    /// Overrides for deliberately inconsistent profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
}

impl TryFrom<BarenblattSpec> for BarenblattParams {
    type Error = PmeError;
    fn try_from(s: BarenblattSpec) -> Result<Self> {
        let p = BarenblattParams::new(s.tau, s.c, s.m, s.d)?;
        Ok(BarenblattParams::with_constants(
            s.tau,
            s.c,
            s.m,
            s.d,
            s.lambda.unwrap_or(p.lambda),
            s.k.unwrap_or(p.k),
        ))
    }
}

impl From<BarenblattParams> for BarenblattSpec {
    fn from(p: BarenblattParams) -> Self {
        let lam = exact_lambda(p.m, p.d);
        BarenblattSpec {
            tau: p.tau,
            c: p.c,
            m: p.m,
            d: p.d,
            lambda: (p.lambda != lam).then_some(p.lambda),
            k: (p.k != lam / 2.0).then_some(p.k),
        }
    }
}

fn exact_lambda(m: f64, d: usize) -> f64 {
    1.0 / ((m - 1.0) * d as f64 + 2.0)
}

impl BarenblattParams {
    pub fn new(tau: f64, c: f64, m: f64, d: usize) -> Result<Self> {
        check_exponent(m)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("C", format!("must be positive, got {c}")));
        }
        if !(1..=3).contains(&d) {
            return Err(invalid("d", format!("unsupported dimension {d}")));
        }
        let lambda = exact_lambda(m, d);
        Ok(BarenblattParams {
            tau,
            c,
            m,
            d,
            lambda,
            k: lambda / 2.0,
        })
    }

    /// Profile with explicit `λ` and `K`, skipping the consistency relations.
    /// The result is generally not a solution; useful as a negative control.
    pub fn with_constants(tau: f64, c: f64, m: f64, d: usize, lambda: f64, k: f64) -> Self {
        BarenblattParams {
            tau,
            c,
            m,
            d,
            lambda,
            k,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Radius of the support, `√(C/K) (t+τ)^λ`.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c / self.k).sqrt() * (t + self.tau).powf(self.lambda)
    }

    /// Front speed `dr/dt = λ √(C/K) (t+τ)^{λ-1}`.
    pub fn front_speed(&self, t: f64) -> f64 {
        self.lambda * (self.c / self.k).sqrt() * (t + self.tau).powf(self.lambda - 1.0)
    }

    fn inner(&self, x: &[f64], s: f64) -> f64 {
        self.c * s.powf(2.0 * self.lambda) - self.k * norm2(x)
    }
}

/// Pressure value of the Barenblatt profile at `(x, t)`.
pub fn barenblatt_eval(p: &BarenblattParams, x: &[f64], t: f64) -> Result<f64> {
    let s = t + p.tau;
    if s <= 0.0 {
        return Err(invalid("t", format!("t + tau = {s} must be positive")));
    }
    if x.len() != p.d {
        return Err(invalid("x", format!("expected {} coordinates, got {}", p.d, x.len())));
    }
    Ok(p.inner(x, s).max(0.0) / s)
}

/// Maximum of `|u_t - (m-1) u Δu - |∇u|²|` over samples `(x, t)` in the positivity set.
pub fn pme_residual_barenblatt(p: &BarenblattParams, samples: &[(Vec<f64>, f64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, t) in samples {
        barenblatt_eval(p, x, *t)?;
        let dv = p
            .derivatives(x, *t)
            .filter(|dv| dv.value > 0.0)
            .ok_or_else(|| PmeError::NotInPositivitySet { point: x.clone() })?;
        let res = dv.time - (p.m - 1.0) * dv.value * dv.laplacian - norm2(&dv.gradient);
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

impl Evaluable for BarenblattParams {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let s = t + self.tau;
        if s <= 0.0 {
            return f64::NAN;
        }
        self.inner(x, s).max(0.0) / s
    }

    /// Smooth-branch derivatives; `None` strictly outside the support.
    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        let s = t + self.tau;
        if s <= 0.0 {
            return None;
        }
        let r2 = norm2(x);
        let inner = self.inner(x, s);
        // allow the closed support so front conditions can use one-sided limits
        if inner < -1e-14 * self.c * s.powf(2.0 * self.lambda) {
            return None;
        }
        let k = self.k;
        Some(Derivatives {
            value: inner.max(0.0) / s,
            gradient: x.iter().map(|xi| -2.0 * k * xi / s).collect(),
            laplacian: -2.0 * k * x.len() as f64 / s,
            time: self.c * (2.0 * self.lambda - 1.0) * s.powf(2.0 * self.lambda - 2.0) + k * r2 / (s * s),
        })
    }

    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        Some((vec![0.0; self.d], Radial::Decreasing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn test_constants_m2_d1() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        assert!((p.lambda() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.k() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(2.0 * p.k(), p.lambda());
    }

    #[test]
    fn test_eval_examples() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        assert_eq!(barenblatt_eval(&p, &[0.0], 0.0).unwrap(), 1.0);
        assert!((barenblatt_eval(&p, &[1.0], 0.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(barenblatt_eval(&p, &[0.0], -1.0).is_err());
        assert!(barenblatt_eval(&p, &[0.0], -2.0).is_err());
        // support radius √6 at t = 0
        let r = p.support_radius(0.0);
        assert!((r - 6f64.sqrt()).abs() < 1e-14);
        assert_eq!(barenblatt_eval(&p, &[r + 1e-9], 0.0).unwrap(), 0.0);
    }

    fn interior_samples(p: &BarenblattParams, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let t = rng.gen_range(0.0..3.0);
                let r = p.support_radius(t) * rng.gen_range(0.0..0.95);
                let x = match p.dim() {
                    1 => vec![if rng.gen::<bool>() { r } else { -r }],
                    _ => {
                        let th = rng.gen_range(0.0..std::f64::consts::TAU);
                        vec![r * th.cos(), r * th.sin()]
                    }
                };
                (x, t)
            })
            .collect()
    }

    #[test]
    fn test_residual_vanishes_for_valid_params() {
        for (m, d, c, tau) in [(2.0, 1, 1.0, 1.0), (2.0, 2, 0.7, 0.5), (3.0, 1, 2.0, 0.3), (1.5, 2, 1.0, 2.0)] {
            let p = BarenblattParams::new(tau, c, m, d).unwrap();
            let res = pme_residual_barenblatt(&p, &interior_samples(&p, 100, 7)).unwrap();
            assert!(res <= 1e-12, "m={m} d={d}: {res}");
        }
    }

    #[test]
    fn test_perturbed_k_breaks_residual() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        let q = BarenblattParams::with_constants(1.0, 1.0, 2.0, 1, p.lambda(), 1.1 * p.k());
        let res = pme_residual_barenblatt(&q, &interior_samples(&q, 100, 3)).unwrap();
        assert!(res > 1e-3, "{res}");
    }

    #[test]
    fn test_m2_d2_identities_and_fd_oracle() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 2).unwrap();
        let (lam, k, m, d) = (p.lambda(), p.k(), 2.0, 2.0);
        assert_eq!(lam, 0.25);
        assert!((2.0 * lam - 1.0 + 2.0 * k * d * (m - 1.0)).abs() < 1e-15);
        assert!((2.0 * k * ((m - 1.0) * d + 2.0) - 1.0).abs() < 1e-15);
        // finite-difference residual built from point values only
        let hh = 1e-4;
        for (x, t) in interior_samples(&p, 20, 11) {
            let u = |dx: f64, dy: f64, dt: f64| p.value(&[x[0] + dx, x[1] + dy], t + dt);
            let u0 = u(0.0, 0.0, 0.0);
            let ut = (u(0.0, 0.0, hh) - u(0.0, 0.0, -hh)) / (2.0 * hh);
            let ux = (u(hh, 0.0, 0.0) - u(-hh, 0.0, 0.0)) / (2.0 * hh);
            let uy = (u(0.0, hh, 0.0) - u(0.0, -hh, 0.0)) / (2.0 * hh);
            let lap = (u(hh, 0.0, 0.0) + u(-hh, 0.0, 0.0) + u(0.0, hh, 0.0) + u(0.0, -hh, 0.0) - 4.0 * u0) / (hh * hh);
            let res = ut - (m - 1.0) * u0 * lap - ux * ux - uy * uy;
            assert!(res.abs() < 1e-5, "{res}");
        }
        let res = pme_residual_barenblatt(&p, &interior_samples(&p, 100, 5)).unwrap();
        assert!(res <= 1e-12);
    }

    #[test]
    fn test_residual_rejects_outside_samples() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        let err = pme_residual_barenblatt(&p, &[(vec![10.0], 0.0)]).unwrap_err();
        assert!(matches!(err, PmeError::NotInPositivitySet { .. }));
    }

    #[test]
    fn test_serde_with_override() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"tau":1.0,"c":1.0,"m":2.0,"d":1}"#);
        let q = BarenblattParams::with_constants(1.0, 1.0, 2.0, 1, p.lambda(), 0.2);
        let back: BarenblattParams = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }
}
