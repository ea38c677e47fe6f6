//! Closed-form solutions and barriers: Barenblatt profiles, spherical traveling
//! waves, equilibrium profiles and their sup/inf-convolution perturbations.

mod barenblatt;
mod convolution;
mod equilibrium;
mod traveling_wave;

use serde::{Deserialize, Serialize};

pub use barenblatt::{barenblatt_eval, pme_residual_barenblatt, BarenblattParams};
pub use convolution::{
    drift_frame_barrier, drift_frame_barrier_with, inf_convolution, sup_convolution, ConvolutionMode, ConvolvedBarrier,
};
pub use equilibrium::{equilibrium_eval, solve_mass_constant, EquilibriumField, EquilibriumProfile};
pub use traveling_wave::{
    traveling_wave_eval, traveling_wave_is_supersolution, TravelingWave, TravelingWaveParams,
};

/// Value and derivatives of the smooth branch of a solution.
///
/// On the closure of the positivity set these are the one-sided limits from the
/// interior, which is what free-boundary conditions need.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
    pub time: f64,
}

/// Direction in which a radially symmetric function varies with `|x - center|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Radial {
    Increasing,
    Decreasing,
}

/// A pressure-variable function of `(x, t)`.
pub trait Evaluable {
    fn value(&self, x: &[f64], t: f64) -> f64;

    /// Analytic derivatives of the positive branch, when available.
    fn derivatives(&self, _x: &[f64], _t: f64) -> Option<Derivatives> {
        None
    }

    /// Center and direction of radial monotonicity, when the function is radial.
    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        None
    }
}

impl<E: Evaluable + ?Sized> Evaluable for &E {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        (**self).value(x, t)
    }
    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        (**self).derivatives(x, t)
    }
    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        (**self).radial()
    }
}

/// Tagged exact-solution descriptor, serialized with a `type` discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExactSolution {
    Barenblatt(BarenblattParams),
    TravelingWave(TravelingWave),
    Equilibrium(EquilibriumProfile),
    Convolved(ConvolvedBarrier),
}

impl ExactSolution {
    fn inner(&self) -> &dyn Evaluable {
        match self {
            ExactSolution::Barenblatt(b) => b,
            ExactSolution::TravelingWave(w) => w,
            ExactSolution::Equilibrium(e) => e,
            ExactSolution::Convolved(c) => c,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ExactSolution::Barenblatt(_) => "barenblatt",
            ExactSolution::TravelingWave(_) => "traveling_wave",
            ExactSolution::Equilibrium(_) => "equilibrium",
            ExactSolution::Convolved(_) => "convolved",
        }
    }
}

impl Evaluable for ExactSolution {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.inner().value(x, t)
    }
    fn derivatives(&self, x: &[f64], t: f64) -> Option<Derivatives> {
        self.inner().derivatives(x, t)
    }
    fn radial(&self) -> Option<(Vec<f64>, Radial)> {
        self.inner().radial()
    }
}

#[inline]
pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;

    #[test]
    fn test_descriptor_json_tags() {
        let sols = [ExactSolution::Barenblatt(BarenblattParams::new(1.0, 1.0, 2.0, 1).unwrap()),
            ExactSolution::TravelingWave(TravelingWave::with_negative_window(
                TravelingWaveParams::new(1.0, 2.0, 0.75, 1.0).unwrap(),
            )),
            ExactSolution::Equilibrium(EquilibriumProfile::new(Potential::quadratic(), 1.0, 2.0).unwrap())];
        for (s, tag) in sols.iter().zip(["barenblatt", "traveling_wave", "equilibrium"]) {
            let json = serde_json::to_value(s).unwrap();
            assert_eq!(json["type"], tag);
            let back: ExactSolution = serde_json::from_value(json).unwrap();
            assert_eq!(&back, s);
        }
        let conv = drift_frame_barrier(
            &TravelingWaveParams::new(1.0, 3.0, 0.75, 1.0).unwrap(),
            &[0.5],
            1.0,
            0.1,
            &Potential::quadratic(),
        )
        .unwrap();
        let json = serde_json::to_value(ExactSolution::Convolved(conv.clone())).unwrap();
        assert_eq!(json["type"], "convolved");
        assert_eq!(json["base"]["type"], "traveling_wave");
        let back: ExactSolution = serde_json::from_value(json).unwrap();
        assert_eq!(back, ExactSolution::Convolved(conv));
    }
}
