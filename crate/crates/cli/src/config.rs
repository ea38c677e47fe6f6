//! Experiment configuration: a JSON document parsed with key paths in every error.

use std::path::PathBuf;

use pmelab_core::exact::{EquilibriumProfile, Evaluable, ExactSolution};
use pmelab_core::field::{density_from_pressure, mass, FieldKind, ScalarField};
use pmelab_core::io::read_snapshot;
use pmelab_core::solver::{FluxScheme, SolverConfig};
use pmelab_core::verify::{Domain, TouchingMode, Verdict, ANALYTIC_TOL};
use pmelab_core::{Grid, PmeError, Potential};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    BarenblattOracle,
    Comparison,
    Convergence,
    Classify,
    Touching,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::BarenblattOracle => "barenblatt-oracle",
            ExperimentKind::Comparison => "comparison",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Classify => "classify",
            ExperimentKind::Touching => "touching",
        }
    }
}

/// Initial density. Pressure-variable exact solutions are converted to density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `(1 - |x - center|² / width²)₊`
    Bump { center: Vec<f64>, width: f64 },
    /// An exact solution sampled at time `t`.
    Exact {
        solution: ExactSolution,
        #[serde(default)]
        t: f64,
    },
    /// The equilibrium of the configured potential; needs a mass.
    Equilibrium {},
    /// Density values at cell centers, row-major.
    Values { values: Vec<f64> },
    /// A snapshot file on the configured grid.
    Snapshot { path: PathBuf },
}

/// Solver settings; `m` lives at the top level of the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_end_time")]
    pub end_time: f64,
    #[serde(default = "default_output_interval")]
    pub output_interval: f64,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    #[serde(default)]
    pub positivity_floor: f64,
    #[serde(default)]
    pub scheme: FluxScheme,
    #[serde(default = "default_margin")]
    pub margin_fraction: f64,
    #[serde(default = "default_guard")]
    pub guard_cells: usize,
}

fn default_end_time() -> f64 {
    1.0
}
fn default_output_interval() -> f64 {
    0.1
}
fn default_cfl() -> f64 {
    SolverConfig::new(2.0, 1.0, 1.0).cfl_factor
}
fn default_margin() -> f64 {
    SolverConfig::new(2.0, 1.0, 1.0).margin_fraction
}
fn default_guard() -> usize {
    SolverConfig::new(2.0, 1.0, 1.0).guard_cells
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            end_time: default_end_time(),
            output_interval: default_output_interval(),
            cfl_factor: default_cfl(),
            positivity_floor: 0.0,
            scheme: FluxScheme::default(),
            margin_fraction: default_margin(),
            guard_cells: default_guard(),
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self, m: f64) -> SolverConfig {
        SolverConfig {
            m,
            cfl_factor: self.cfl_factor,
            positivity_floor: self.positivity_floor,
            end_time: self.end_time,
            output_interval: self.output_interval,
            scheme: self.scheme,
            margin_fraction: self.margin_fraction,
            guard_cells: self.guard_cells,
        }
    }
}

/// Barenblatt oracle: runs on the grid and on its refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub c: f64,
    /// Errors are measured on `|x| <= inner_fraction * r(t)`.
    #[serde(default = "default_inner")]
    pub inner_fraction: f64,
    /// Largest admissible pressure error on the coarse grid.
    #[serde(default = "default_max_error")]
    pub max_error: f64,
    /// Smallest admissible coarse/fine error ratio.
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
}

fn one() -> f64 {
    1.0
}
fn default_inner() -> f64 {
    0.8
}
fn default_max_error() -> f64 {
    0.02
}
fn default_min_ratio() -> f64 {
    1.7
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            tau: 1.0,
            c: 1.0,
            inner_fraction: default_inner(),
            max_error: default_max_error(),
            min_ratio: default_min_ratio(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSettings {
    /// The upper initial datum `rho0'`.
    pub upper: InitialData,
    #[serde(default)]
    pub upper_mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSettings {
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_slack")]
    pub monotone_slack: f64,
}

fn default_burn_in() -> f64 {
    0.1
}
fn default_slack() -> f64 {
    1e-10
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            fit_window: None,
            burn_in: default_burn_in(),
            monotone_slack: default_slack(),
        }
    }
}

/// Without a candidate the evolved trajectory is classified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySettings {
    #[serde(default)]
    pub candidate: Option<ExactSolution>,
    /// Required with a candidate.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Defaults to the analytic tolerance with a candidate and to `5h` otherwise.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// When set, the run passes only if the verdict matches.
    #[serde(default)]
    pub expect: Option<Verdict>,
}

fn default_fd_step() -> f64 {
    1e-5
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings {
            candidate: None,
            domain: None,
            tol: None,
            fd_step: default_fd_step(),
            expect: None,
        }
    }
}

/// Without a candidate the evolved trajectory is tested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TouchingSettings {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<TouchingMode>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default = "default_slope_noise")]
    pub slope_noise: f64,
    #[serde(default = "default_curvature")]
    pub curvature: f64,
    #[serde(default)]
    pub candidate: Option<ExactSolution>,
    /// Sample times for a candidate.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    /// Adds `c·t` to the tested pressure; a positive shift must be detected.
    #[serde(default)]
    pub time_shift: f64,
    /// Expect at least one violation in every mode instead of none.
    #[serde(default)]
    pub expect_violations: bool,
}

fn default_count() -> usize {
    200
}
fn default_modes() -> Vec<TouchingMode> {
    vec![TouchingMode::Above, TouchingMode::Below]
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

impl Default for TouchingSettings {
    fn default() -> Self {
        TouchingSettings {
            count: default_count(),
            modes: default_modes(),
            tol: None,
            windows: default_windows(),
            slope_noise: default_slope_noise(),
            curvature: default_curvature(),
            candidate: None,
            times: None,
            time_shift: 0.0,
            expect_violations: false,
        }
    }
}

fn default_conservation_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: Grid,
    #[serde(default = "Potential::zero")]
    pub potential: Potential,
    pub m: f64,
    /// Target mass `m0`: rescales the initial datum, or selects the equilibrium when
    /// no initial datum is given.
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Also write the evolved trajectory directory (always written by `simulate`).
    #[serde(default)]
    pub save_trajectory: bool,
    /// Relative mass drift allowed by the conservation check.
    #[serde(default = "default_conservation_tol")]
    pub conservation_tol: f64,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub comparison: Option<ComparisonSettings>,
    #[serde(default)]
    pub convergence: ConvergenceSettings,
    #[serde(default)]
    pub classify: ClassifySettings,
    #[serde(default)]
    pub touching: TouchingSettings,
}

fn bad(path: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive and finite, got {v}")))
    }
}

/// Parse and validate one config object.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        bad(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse either one config object or a list of them.
pub fn parse_config_list(text: &str) -> Result<Vec<ExperimentConfig>, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad("", e.to_string()))?;
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                parse_config(&item.to_string()).map_err(|e| match e {
                    CliError::Config { path, reason } => bad(
                        if path.is_empty() { format!("[{i}]") } else { format!("[{i}].{path}") },
                        reason,
                    ),
                    other => other,
                })
            })
            .collect(),
        _ => Ok(vec![parse_config(text)?]),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(bad("m", format!("porous-medium exponent must satisfy m > 1, got {}", self.m)));
        }
        let d = self.grid.dim();
        self.potential.validate(d).map_err(|e| bad("potential", e.to_string()))?;
        if let Some(m0) = self.mass {
            positive("mass", m0)?;
        }
        self.solver
            .solver_config(self.m)
            .validate()
            .map_err(|e| match e {
                PmeError::InvalidParameter { name, reason } => bad(format!("solver.{name}"), reason),
                other => bad("solver", other.to_string()),
            })?;
        positive("conservation_tol", self.conservation_tol)?;
        if let Some(init) = &self.initial {
            validate_initial("initial", init, &self.grid)?;
        }
        match self.kind {
            ExperimentKind::BarenblattOracle => {
                if self.initial.is_some() || self.mass.is_some() {
                    return Err(bad("initial", "barenblatt-oracle builds its own initial datum; leave initial and mass unset"));
                }
                if !self.potential.is_zero() {
                    return Err(bad("potential", "barenblatt-oracle needs the zero potential"));
                }
                let o = &self.oracle;
                positive("oracle.tau", o.tau)?;
                positive("oracle.c", o.c)?;
                positive("oracle.max_error", o.max_error)?;
                positive("oracle.min_ratio", o.min_ratio)?;
                if !(o.inner_fraction > 0.0 && o.inner_fraction <= 1.0) {
                    return Err(bad("oracle.inner_fraction", "must lie in (0, 1]"));
                }
            }
            ExperimentKind::Comparison => {
                self.require_initial()?;
                let c = self.comparison.as_ref().ok_or_else(|| bad("comparison", "required for kind comparison"))?;
                validate_initial("comparison.upper", &c.upper, &self.grid)?;
                if let Some(m0) = c.upper_mass {
                    positive("comparison.upper_mass", m0)?;
                }
                if matches!(c.upper, InitialData::Equilibrium {}) && c.upper_mass.is_none() {
                    return Err(bad("comparison.upper_mass", "required for an equilibrium upper datum"));
                }
            }
            ExperimentKind::Classify if self.classify.candidate.is_some() => {
                let domain = self
                    .classify
                    .domain
                    .as_ref()
                    .ok_or_else(|| bad("classify.domain", "required with a candidate"))?;
                domain.validate().map_err(|e| bad("classify.domain", e.to_string()))?;
                if domain.center.len() != d {
                    return Err(bad("classify.domain.center", format!("expected {d} coordinates")));
                }
                if let Some(tol) = self.classify.tol {
                    positive("classify.tol", tol)?;
                }
                positive("classify.fd_step", self.classify.fd_step)?;
            }
            ExperimentKind::Touching => {
                let t = &self.touching;
                if t.count == 0 {
                    return Err(bad("touching.count", "must be at least 1"));
                }
                if t.modes.is_empty() {
                    return Err(bad("touching.modes", "must name at least one mode"));
                }
                if t.windows.is_empty() || t.windows.contains(&0) {
                    return Err(bad("touching.windows", "must be nonempty with entries >= 1"));
                }
                if let Some(tol) = t.tol {
                    positive("touching.tol", tol)?;
                }
                if !t.time_shift.is_finite() {
                    return Err(bad("touching.time_shift", "must be finite"));
                }
                match (&t.candidate, &t.times) {
                    (Some(_), None) => return Err(bad("touching.times", "required with a candidate")),
                    (Some(_), Some(ts)) if ts.len() < 2 || ts.windows(2).any(|w| w[1] <= w[0]) => {
                        return Err(bad("touching.times", "need at least two increasing times"));
                    }
                    (None, _) => self.require_initial()?,
                    _ => {}
                }
            }
            _ => self.require_initial()?,
        }
        Ok(())
    }

    fn require_initial(&self) -> Result<(), CliError> {
        match (&self.initial, self.mass) {
            (None, None) => Err(bad("initial", format!("required for kind {} (or give mass for the equilibrium)", self.kind.as_str()))),
            (Some(InitialData::Equilibrium {}), None) => Err(bad("mass", "required for an equilibrium initial datum")),
            _ => Ok(()),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.solver_config(self.m)
    }

    /// The lower (or only) initial density.
    pub fn initial_density(&self) -> pmelab_core::Result<ScalarField> {
        let init = self.initial.clone().unwrap_or(InitialData::Equilibrium {});
        build_density(&init, self.mass, &self.grid, &self.potential, self.m)
    }

    pub fn upper_density(&self) -> pmelab_core::Result<Option<ScalarField>> {
        self.comparison
            .as_ref()
            .map(|c| build_density(&c.upper, c.upper_mass, &self.grid, &self.potential, self.m))
            .transpose()
    }

    pub fn classify_tol(&self) -> f64 {
        self.classify.tol.unwrap_or(ANALYTIC_TOL)
    }
}

fn validate_initial(path: &str, init: &InitialData, grid: &Grid) -> Result<(), CliError> {
    let d = grid.dim();
    match init {
        InitialData::Bump { center, width } => {
            if center.len() != d {
                return Err(bad(format!("{path}.center"), format!("expected {d} coordinates, got {}", center.len())));
            }
            positive(&format!("{path}.width"), *width)
        }
        InitialData::Exact { t, .. } if !t.is_finite() => Err(bad(format!("{path}.t"), "must be finite")),
        InitialData::Values { values } => {
            if values.len() != grid.len() {
                return Err(bad(format!("{path}.values"), format!("expected {} values, got {}", grid.len(), values.len())));
            }
            match values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
                Some(i) => Err(bad(format!("{path}.values[{i}]"), "density must be finite and nonnegative")),
                None => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

fn build_density(init: &InitialData, m0: Option<f64>, grid: &Grid, phi: &Potential, m: f64) -> pmelab_core::Result<ScalarField> {
    let rho = match init {
        InitialData::Equilibrium {} => {
            let m0 = m0.ok_or_else(|| PmeError::InsufficientData("an equilibrium initial datum needs a mass".into()))?;
            return EquilibriumProfile::with_mass(phi.clone(), m, m0, grid)?.density(grid);
        }
        InitialData::Bump { center, width } => ScalarField::from_fn(grid.clone(), FieldKind::Density, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            (1.0 - r2 / (width * width)).max(0.0)
        })?,
        InitialData::Exact { solution, t } => {
            let u = ScalarField::from_fn(grid.clone(), FieldKind::Pressure, |x| solution.value(x, *t))?;
            density_from_pressure(&u, m)?
        }
        InitialData::Values { values } => ScalarField::new(grid.clone(), values.clone(), FieldKind::Density)?,
        InitialData::Snapshot { path } => {
            let (f, _) = read_snapshot(path, grid)?;
            match f.kind() {
                FieldKind::Density => f,
                _ => density_from_pressure(&f, m)?,
            }
        }
    };
    match m0 {
        None => Ok(rho),
        Some(target) => {
            let have = mass(&rho)?;
            if have <= 0.0 {
                return Err(PmeError::Undefined("cannot rescale an initial datum of zero mass".into()));
            }
            rho.scaled(target / have)
        }
    }
}
