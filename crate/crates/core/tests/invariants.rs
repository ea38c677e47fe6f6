//! Cross-module invariants: exact solutions on grids, solver properties, fronts.

use pmelab_core::exact::{BarenblattParams, Evaluable};
use pmelab_core::field::{density_from_pressure, mass, pressure_from_density, FieldKind, ScalarField};
use pmelab_core::freeboundary::{default_threshold, extract_boundary, normal_velocity_estimate};
use pmelab_core::solver::{evolve, support_radius, SolverConfig, Trajectory};
use pmelab_core::{Grid, Potential};
use proptest::prelude::*;

fn barenblatt_field(p: &BarenblattParams, g: &Grid, t: f64) -> ScalarField {
    ScalarField::from_fn(g.clone(), FieldKind::Pressure, |x| p.value(x, t)).unwrap()
}

fn density_mass(p: &BarenblattParams, g: &Grid, t: f64) -> f64 {
    mass(&density_from_pressure(&barenblatt_field(p, g, t), p.m()).unwrap()).unwrap()
}

#[test]
fn test_barenblatt_density_mass_is_constant_in_time() {
    let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
    let spread = |n: usize| {
        let g = Grid::line(-10.0, 10.0, n).unwrap();
        let ms: Vec<f64> = (0..=10).map(|i| density_mass(&p, &g, 0.5 * i as f64)).collect();
        let m0 = ms[0];
        ms.iter().map(|m| (m - m0).abs() / m0).fold(0.0, f64::max)
    };
    let (coarse, fine) = (spread(100_000), spread(200_000));
    assert!(fine <= 1e-8, "relative mass spread {fine:e}");
    assert!(fine < coarse, "refinement must reduce the spread: {coarse:e} -> {fine:e}");
}

#[test]
fn test_barenblatt_support_radius_within_one_cell() {
    for (m, d, n) in [(2.0, 1, 2000), (3.0, 1, 2000), (2.0, 2, 200)] {
        let p = BarenblattParams::new(1.0, 1.0, m, d).unwrap();
        let g = if d == 1 { Grid::line(-10.0, 10.0, n).unwrap() } else { Grid::square(-5.0, 5.0, n).unwrap() };
        for t in [0.0, 0.5, 1.0, 2.0] {
            let u = barenblatt_field(&p, &g, t);
            let measured = (0..g.len())
                .filter(|&c| u.values()[c] > 0.0)
                .map(|c| g.center(c).iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let r = p.support_radius(t);
            assert!((measured - r).abs() <= g.h(), "m={m} d={d} t={t}: {measured} vs {r}");
        }
    }
}

fn barenblatt_run(n: usize, end: f64, every: f64) -> (BarenblattParams, Trajectory) {
    let p = BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap();
    let g = Grid::line(-10.0, 10.0, n).unwrap();
    let rho0 = density_from_pressure(&barenblatt_field(&p, &g, 0.0), 2.0).unwrap();
    let tr = evolve(&rho0, &Potential::zero(), &SolverConfig::new(2.0, end, every)).unwrap();
    (p, tr)
}

#[test]
fn test_barenblatt_front_speed_within_ten_percent() {
    let (p, tr) = barenblatt_run(4000, 1.0, 0.01);
    for k in [30, 50, 80] {
        let s = &tr.snapshots[k];
        let u = pressure_from_density(&s.rho, 2.0).unwrap();
        let b = extract_boundary(&u, default_threshold(&u), s.t).unwrap();
        // dr/dt = λ √(C/K) (t + τ)^(λ-1)
        let exact = p.front_speed(s.t);
        for pt in &b.points {
            let v = normal_velocity_estimate(&tr, k, pt, 4.0 * tr.grid().h()).unwrap();
            let measured = v.measured.expect("a matched front point");
            assert!((measured - exact).abs() <= 0.1 * exact, "t={}: {measured} vs {exact}", s.t);
        }
    }
}

#[test]
fn test_barenblatt_front_never_retreats() {
    let (_, tr) = barenblatt_run(1000, 2.0, 0.1);
    let h = tr.grid().h();
    let radii: Vec<f64> = tr
        .snapshots
        .iter()
        .map(|s| {
            let u = pressure_from_density(&s.rho, 2.0).unwrap();
            let b = extract_boundary(&u, default_threshold(&u), s.t).unwrap();
            b.points.iter().map(|x| x[0].abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in radii.windows(2) {
        assert!(w[1] >= w[0] - h, "{radii:?}");
    }
    assert!(radii.last().unwrap() > &(radii[0] + 0.2));
}

fn bump(g: &Grid, center: f64, w: f64, m0: f64) -> ScalarField {
    let f = ScalarField::from_fn(g.clone(), FieldKind::Density, |x| (1.0 - ((x[0] - center) / w).powi(2)).max(0.0)).unwrap();
    f.scaled(m0 / mass(&f).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Positivity, conservation and the finite-propagation bound from the stationary
    /// supersolution `(C - Φ)₊` on random bumps and quadratic potentials.
    #[test]
    fn prop_solver_invariants(
        center in -0.4f64..0.4,
        width in 0.2f64..0.6,
        m0 in 0.1f64..1.0,
        coeff in 0.0f64..2.0,
        m in 1.5f64..3.0,
    ) {
        let g = Grid::line(-3.0, 3.0, 150).unwrap();
        let phi = Potential::quadratic_at(coeff, vec![0.0]);
        let rho0 = bump(&g, center, width, m0);
        let tr = evolve(&rho0, &phi, &SolverConfig::new(m, 0.5, 0.05)).unwrap();
        prop_assert!(tr.halted.is_none());
        prop_assert!(tr.mass_drift() <= 1e-10, "drift {}", tr.mass_drift());
        let u0 = pressure_from_density(&rho0, m).unwrap();
        let c = (0..g.len())
            .filter(|&k| u0.values()[k] > 0.0)
            .map(|k| u0.values()[k] + phi.value(&g.center(k)))
            .fold(f64::NEG_INFINITY, f64::max);
        for s in &tr.snapshots {
            prop_assert!(s.rho.values().iter().all(|&v| v >= 0.0));
            // any cell with ρ > 0 must lie where C - Φ > 0, up to one cell
            let reach = if coeff > 0.0 { (c / coeff).sqrt() } else { f64::INFINITY };
            let strict = (0..g.len())
                .filter(|&k| s.rho.values()[k] > 0.0)
                .map(|k| g.center(k)[0].abs())
                .fold(0.0, f64::max);
            if coeff > 0.0 {
                prop_assert!(support_radius(&s.rho, m) <= reach + g.h());
                prop_assert!(strict <= reach + g.h(), "t={}: {strict} > {reach}", s.t);
            }
        }
    }
}
