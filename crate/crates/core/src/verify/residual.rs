use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exact::Evaluable;
use crate::field::{pressure_from_density, ScalarField};
use crate::freeboundary::default_threshold;
use crate::potential::Potential;
use crate::solver::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// Residual of the pressure equation at one space-time sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub x: Vec<f64>,
    pub t: f64,
    /// `None` when the sample is too close to the front (inconclusive).
    pub residual: Option<f64>,
    pub provenance: Provenance,
}

/// Summary statistics over the conclusive samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: usize,
    pub inconclusive: usize,
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

impl ResidualStats {
    pub fn from_samples(samples: &[ResidualSample]) -> Self {
        let vals: Vec<f64> = samples.iter().filter_map(|s| s.residual).collect();
        let (min, max) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        ResidualStats {
            count: vals.len(),
            inconclusive: samples.len() - vals.len(),
            min: if vals.is_empty() { 0.0 } else { min },
            max: if vals.is_empty() { 0.0 } else { max },
            max_abs: vals.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

/// `u_t - (m-1) u Δu - |∇u|² - ∇u·∇Φ - (m-1) u ΔΦ` from pointwise derivatives.
pub fn pmed_operator(u: f64, grad: &[f64], lap: f64, ut: f64, phi: &Potential, x: &[f64], m: f64) -> f64 {
    let p = phi.probe(x);
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let gp: f64 = grad.iter().zip(&p.gradient).map(|(a, b)| a * b).sum();
    ut - (m - 1.0) * u * lap - g2 - gp - (m - 1.0) * u * p.laplacian
}

/// Residuals of an evaluable candidate at `(x, t)` samples.
///
/// Analytic derivatives are used where the candidate provides them; otherwise
/// centered differences of width `fd_step`, which must not leave the positivity set.
pub fn pmed_residual(
    candidate: &dyn Evaluable,
    phi: &Potential,
    m: f64,
    samples: &[(Vec<f64>, f64)],
    fd_step: f64,
) -> Result<Vec<ResidualSample>> {
    if !(fd_step > 0.0) {
        return Err(invalid("fd_step", "must be positive"));
    }
    Ok(samples
        .iter()
        .map(|(x, t)| {
            if let Some(dv) = candidate.derivatives(x, *t) {
                let residual = (dv.value > 0.0)
                    .then(|| pmed_operator(dv.value, &dv.gradient, dv.laplacian, dv.time, phi, x, m));
                return ResidualSample {
                    x: x.clone(),
                    t: *t,
                    residual,
                    provenance: Provenance::Analytic,
                };
            }
            ResidualSample {
                x: x.clone(),
                t: *t,
                residual: fd_residual(candidate, phi, m, x, *t, fd_step),
                provenance: Provenance::FiniteDifference,
            }
        })
        .collect())
}

fn fd_residual(c: &dyn Evaluable, phi: &Potential, m: f64, x: &[f64], t: f64, h: f64) -> Option<f64> {
    let u0 = c.value(x, t);
    let mut pts = vec![(u0, 0usize, 0.0)];
    let d = x.len();
    let mut grad = vec![0.0; d];
    let mut lap = 0.0;
    let mut y = x.to_vec();
    for a in 0..d {
        y[a] = x[a] + h;
        let up = c.value(&y, t);
        y[a] = x[a] - h;
        let dn = c.value(&y, t);
        y[a] = x[a];
        pts.push((up, a, h));
        pts.push((dn, a, -h));
        grad[a] = (up - dn) / (2.0 * h);
        lap += (up - 2.0 * u0 + dn) / (h * h);
    }
    let (tp, tm) = (c.value(x, t + h), c.value(x, t - h));
    // the whole stencil must sit in the positivity set
    if pts.iter().any(|p| !(p.0 > 0.0)) || !(tp > 0.0) || !(tm > 0.0) {
        return None;
    }
    let ut = (tp - tm) / (2.0 * h);
    Some(pmed_operator(u0, &grad, lap, ut, phi, x, m))
}

/// Pressure snapshots of a trajectory with their extraction thresholds.
pub(crate) struct PressureStack {
    pub u: Vec<ScalarField>,
    pub eps: Vec<f64>,
    pub t: Vec<f64>,
}

impl PressureStack {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        let u: Vec<ScalarField> = traj
            .snapshots
            .iter()
            .map(|s| pressure_from_density(&s.rho, traj.config.m))
            .collect::<Result<_>>()?;
        let eps = u.iter().map(default_threshold).collect();
        Ok(PressureStack {
            u,
            eps,
            t: traj.snapshots.iter().map(|s| s.t).collect(),
        })
    }

    /// Whether cell `c` of snapshot `k` and its axis neighbours are all above threshold.
    pub fn stencil_positive(&self, k: usize, c: usize) -> bool {
        let f = &self.u[k];
        let g = f.grid();
        let idx = g.unravel(c);
        if (0..g.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == g.cells()[a]) {
            return false;
        }
        f.values()[c] > self.eps[k] && g.neighbors(c).all(|j| f.values()[j] > self.eps[k])
    }

    /// Centered spatial derivatives `(grad, lap)` at cell `c` of snapshot `k`.
    pub fn space_derivs(&self, k: usize, c: usize) -> (Vec<f64>, f64, [[f64; 2]; 2]) {
        let f = &self.u[k];
        let g = f.grid();
        let v = f.values();
        let h = g.h();
        let d = g.dim();
        let mut grad = vec![0.0; d];
        let mut hess = [[0.0; 2]; 2];
        for a in 0..d {
            let s = g.stride(a);
            grad[a] = (v[c + s] - v[c - s]) / (2.0 * h);
            hess[a][a] = (v[c + s] - 2.0 * v[c] + v[c - s]) / (h * h);
        }
        if d == 2 {
            let (s0, s1) = (g.stride(0), g.stride(1));
            let mixed = (v[c + s0 + s1] - v[c + s0 - s1] - v[c - s0 + s1] + v[c - s0 - s1]) / (4.0 * h * h);
            hess[0][1] = mixed;
            hess[1][0] = mixed;
        }
        let lap = (0..d).map(|a| hess[a][a]).sum();
        (grad, lap, hess)
    }
}

/// Residuals of a computed trajectory at `(snapshot, cell)` samples, using centered
/// differences in space and between snapshots `k ± 1` in time.
pub fn pmed_residual_trajectory(traj: &Trajectory, samples: &[(usize, usize)]) -> Result<Vec<ResidualSample>> {
    let st = PressureStack::new(traj)?;
    let m = traj.config.m;
    let n = st.u.len();
    let g = traj.grid().clone();
    Ok(samples
        .iter()
        .map(|&(k, c)| {
            let x = g.center(c);
            let t = st.t.get(k).copied().unwrap_or(f64::NAN);
            let ok = k >= 1
                && k + 1 < n
                && c < g.len()
                && (k - 1..=k + 1).all(|j| st.stencil_positive(j, c));
            let residual = ok.then(|| {
                let (grad, lap, _) = st.space_derivs(k, c);
                let ut = (st.u[k + 1].values()[c] - st.u[k - 1].values()[c]) / (st.t[k + 1] - st.t[k - 1]);
                pmed_operator(st.u[k].values()[c], &grad, lap, ut, &traj.potential, &x, m)
            });
            ResidualSample {
                x,
                t,
                residual,
                provenance: Provenance::FiniteDifference,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{BarenblattParams, EquilibriumProfile};
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forms(d: usize) -> Vec<Potential> {
        vec![
            Potential::quadratic(),
            Potential::quadratic_at(0.7, vec![0.1; d]),
            Potential::smoothed_cone(),
            Potential::anisotropic(if d == 1 { vec![vec![1.5]] } else { vec![vec![2.0, 0.3], vec![0.3, 1.0]] }).unwrap(),
            Potential::polynomial(vec![0.0, 0.1, 1.0, 0.0, 0.2]),
            Potential::tabulated(vec![-3.0, -1.0, 0.0, 1.0, 3.0], vec![5.0, 1.0, 0.0, 1.0, 5.0]).unwrap(),
        ]
    }

    #[test]
    fn test_equilibrium_residual_each_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [1usize, 2] {
            for phi in forms(d) {
                if phi.validate(d).is_err() {
                    continue;
                }
                let e = EquilibriumProfile::new(phi.clone(), 1.0, 2.0).unwrap();
                let mut samples = Vec::new();
                while samples.len() < 1000 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
                    if e.value(&x, 0.0) > 1e-3 {
                        samples.push((x, rng.gen_range(0.0..1.0)));
                    }
                }
                let res = pmed_residual(&e, &phi, 2.0, &samples, 1e-4).unwrap();
                let st = ResidualStats::from_samples(&res);
                assert_eq!(st.count, 1000);
                assert!(st.max_abs <= 1e-12, "{} d={d}: {}", phi.form_name(), st.max_abs);
                assert!(res.iter().all(|s| s.provenance == Provenance::Analytic));
            }
        }
    }

    #[test]
    fn test_barenblatt_residual_with_and_without_drift() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        let samples: Vec<(Vec<f64>, f64)> = (0..50).map(|i| (vec![-2.0 + 0.08 * i as f64], 0.3)).collect();
        let res = pmed_residual(&p, &Potential::zero(), 2.0, &samples, 1e-4).unwrap();
        assert!(ResidualStats::from_samples(&res).max_abs <= 1e-12);
        let phi = Potential::quadratic();
        let res = pmed_residual(&p, &phi, 2.0, &samples, 1e-4).unwrap();
        for s in &res {
            let dv = p.derivatives(&s.x, s.t).unwrap();
            let drift = dv.gradient[0] * 2.0 * s.x[0] + dv.value * 2.0;
            assert!((s.residual.unwrap() + drift).abs() < 1e-12);
        }
        let generic = res.iter().filter(|s| s.residual.unwrap().abs() > 1e-3).count();
        assert!(generic > 40);
    }

    /// Evaluable without analytic derivatives, to exercise the stencil path.
    struct Opaque(BarenblattParams);
    impl Evaluable for Opaque {
        fn value(&self, x: &[f64], t: f64) -> f64 {
            self.0.value(x, t)
        }
    }

    #[test]
    fn test_fd_fallback_and_front_mask() {
        let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
        let r = p.support_radius(0.5);
        let samples = vec![(vec![0.3], 0.5), (vec![r - 1e-5], 0.5)];
        let res = pmed_residual(&Opaque(p), &Potential::zero(), 2.0, &samples, 1e-3).unwrap();
        assert_eq!(res[0].provenance, Provenance::FiniteDifference);
        assert!(res[0].residual.unwrap().abs() < 1e-5);
        assert!(res[1].residual.is_none());
    }

    #[test]
    fn test_trajectory_residual_on_equilibrium() {
        let g = Grid::line(-2.0, 2.0, 200).unwrap();
        let phi = Potential::quadratic();
        let e = EquilibriumProfile::new(phi.clone(), 1.0, 2.0).unwrap();
        let rho0 = e.density(&g).unwrap();
        let tr = crate::solver::evolve(&rho0, &phi, &crate::solver::SolverConfig::new(2.0, 0.3, 0.1)).unwrap();
        let samples: Vec<(usize, usize)> = (0..g.len()).map(|c| (1, c)).collect();
        let res = pmed_residual_trajectory(&tr, &samples).unwrap();
        let st = ResidualStats::from_samples(&res);
        assert!(st.count > 80 && st.inconclusive > 0);
        assert!(st.max_abs < 1e-9, "{}", st.max_abs);
        // endpoints have no centered time difference
        assert!(pmed_residual_trajectory(&tr, &[(0, 100)]).unwrap()[0].residual.is_none());
    }
}
