//! Pipelines behind each experiment kind and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pmelab_core::exact::{BarenblattParams, Evaluable};
use pmelab_core::field::{pressure_from_density, FieldKind, ScalarField};
use pmelab_core::io::{read_json, write_csv, write_distance_csv, write_json, write_trajectory};
use pmelab_core::solver::{evolve, Trajectory};
use pmelab_core::verify::{
    classify, classify_trajectory, comparison_experiment, conservation_report, convergence_experiment,
    touching_test, ConvergenceOptions, SpaceTimeField, TouchingOptions,
};
use pmelab_core::{Grid, Potential};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORACLE_HEADER: &str = "h,linf_error";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Passed => 0,
            Status::Failed => 1,
            Status::Error => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Value,
    /// `value <relation> tol` is what passing means.
    pub relation: String,
    pub tol: Value,
}

fn check(name: &str, value: impl Serialize, relation: &str, tol: impl Serialize, passed: bool) -> Check {
    Check {
        name: name.into(),
        passed,
        value: json!(value),
        relation: relation.into(),
        tol: json!(tol),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub status: Status,
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

/// Write a CSV with the given header and 17-significant-digit rows.
pub fn emit_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
    Ok(write_csv(path, header, rows)?)
}

/// Write a manifest as key-sorted pretty JSON.
pub fn emit_manifest(manifest: &Manifest, path: &Path) -> Result<(), CliError> {
    Ok(write_json(path, manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    Ok(read_json(&dir.join(MANIFEST_FILE))?)
}

fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((format!("{:x}", Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Listed artifacts that are missing or whose digest no longer matches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, CliError> {
    let manifest = read_manifest(dir)?;
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        match sha256_file(&dir.join(&a.path)) {
            Ok((digest, bytes)) if digest == a.sha256 && bytes == a.bytes => {}
            _ => bad.push(a.path.clone()),
        }
    }
    Ok(bad)
}

/// Files written by a pipeline, relative to the output directory.
struct Recorder {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Recorder {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn add(&mut self, path: PathBuf) {
        if !self.files.contains(&path) {
            self.files.push(path);
        }
    }

    fn trajectory(&mut self, traj: &Trajectory) -> Result<(), CliError> {
        for p in write_trajectory(&self.path("trajectory"), traj)? {
            self.add(p);
        }
        Ok(())
    }

    fn artifacts(&self) -> Vec<Artifact> {
        self.files
            .iter()
            .filter_map(|p| {
                let (sha256, bytes) = sha256_file(p).ok()?;
                let rel = p.strip_prefix(&self.out).unwrap_or(p);
                let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                Some(Artifact { path, sha256, bytes })
            })
            .collect()
    }
}

struct Outcome {
    checks: Vec<Check>,
    summary: Value,
}

/// Run one experiment and write its manifest last.
///
/// Pipeline failures produce a manifest with status `error`; only a missing or
/// unwritable output directory is returned as `Err`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let out = config.out.clone().ok_or_else(|| CliError::Config {
        path: "out".into(),
        reason: "required (set it in the config or pass --out)".into(),
    })?;
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        // A stale manifest would claim the new run completed.
        std::fs::remove_file(&manifest_path).map_err(|source| CliError::Io {
            path: manifest_path.clone(),
            source,
        })?;
    }
    let mut rec = Recorder {
        out: out.clone(),
        files: Vec::new(),
    };
    let result = dispatch(config, &mut rec);
    let (status, error, checks, summary) = match result {
        Ok(o) => {
            let status = if o.checks.iter().all(|c| c.passed) { Status::Passed } else { Status::Failed };
            (status, None, o.checks, o.summary)
        }
        Err(e) => (Status::Error, Some(e.to_string()), Vec::new(), Value::Null),
    };
    let manifest = Manifest {
        tool: "pmelab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status,
        error,
        config: config.clone(),
        checks,
        summary,
        artifacts: rec.artifacts(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    emit_manifest(&manifest, &manifest_path)?;
    Ok(manifest)
}

fn dispatch(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    match cfg.kind {
        ExperimentKind::Simulate => simulate(cfg, rec),
        ExperimentKind::BarenblattOracle => barenblatt_oracle(cfg, rec),
        ExperimentKind::Comparison => comparison(cfg, rec),
        ExperimentKind::Convergence => convergence(cfg, rec),
        ExperimentKind::Classify => classification(cfg, rec),
        ExperimentKind::Touching => touching(cfg, rec),
    }
}

fn completed(traj_halted: &Option<String>) -> Check {
    check("completed", traj_halted, "==", Value::Null, traj_halted.is_none())
}

fn evolve_initial(cfg: &ExperimentConfig, rec: &mut Recorder, save: bool) -> Result<Trajectory, CliError> {
    let rho0 = cfg.initial_density()?;
    let traj = evolve(&rho0, &cfg.potential, &cfg.solver_config())?;
    if save {
        rec.trajectory(&traj)?;
    }
    Ok(traj)
}

fn simulate(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    let traj = evolve_initial(cfg, rec, true)?;
    let cons = conservation_report(&traj, cfg.conservation_tol)?;
    let last = traj.diagnostics.last().expect("a trajectory has diagnostics");
    Ok(Outcome {
        checks: vec![
            check("mass_conservation", cons.max_relative_drift, "<=", cons.tol, cons.max_relative_drift <= cons.tol),
            completed(&traj.halted),
        ],
        summary: json!({
            "conservation": cons,
            "steps": traj.steps,
            "snapshots": traj.snapshots.len(),
            "final": last,
            "boundary_flux": traj.boundary_flux,
        }),
    })
}

/// Max pressure error on `|x| <= fraction * r(t)` over all snapshots.
fn barenblatt_error(p: &BarenblattParams, grid: &Grid, cfg: &ExperimentConfig) -> Result<(f64, Trajectory), CliError> {
    let u0 = ScalarField::from_fn(grid.clone(), FieldKind::Pressure, |x| p.value(x, 0.0))?;
    let rho0 = pmelab_core::field::density_from_pressure(&u0, cfg.m)?;
    let traj = evolve(&rho0, &Potential::zero(), &cfg.solver_config())?;
    let mut err: f64 = 0.0;
    for s in &traj.snapshots {
        let u = pressure_from_density(&s.rho, cfg.m)?;
        let r = cfg.oracle.inner_fraction * p.support_radius(s.t);
        for c in 0..grid.len() {
            let x = grid.center(c);
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r {
                err = err.max((u.values()[c] - p.value(&x, s.t)).abs());
            }
        }
    }
    Ok((err, traj))
}

fn barenblatt_oracle(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    let o = &cfg.oracle;
    let p = BarenblattParams::new(o.tau, o.c, cfg.m, cfg.grid.dim())?;
    let fine = cfg.grid.refined();
    let (e1, t1) = barenblatt_error(&p, &cfg.grid, cfg)?;
    let (e2, t2) = barenblatt_error(&p, &fine, cfg)?;
    if cfg.save_trajectory {
        rec.trajectory(&t1)?;
    }
    let csv = rec.path("oracle.csv");
    emit_csv(&csv, ORACLE_HEADER, &[vec![cfg.grid.h(), e1], vec![fine.h(), e2]])?;
    rec.add(csv);
    let ratio = e1 / e2;
    let order = ratio.log2();
    let drift = t1.mass_drift().max(t2.mass_drift());
    Ok(Outcome {
        checks: vec![
            check("linf_error", e1, "<=", o.max_error, e1 <= o.max_error),
            check("error_ratio", ratio, ">=", o.min_ratio, ratio >= o.min_ratio),
            check("mass_conservation", drift, "<=", cfg.conservation_tol, drift <= cfg.conservation_tol),
            completed(&t1.halted.clone().or(t2.halted.clone())),
        ],
        summary: json!({
            "barenblatt": p,
            "h": cfg.grid.h(),
            "linf_error": e1,
            "h_refined": fine.h(),
            "linf_error_refined": e2,
            "error_ratio": ratio,
            "convergence_order": order,
            "measured_on": format!("|x| <= {} r(t), all snapshots, pressure variable", o.inner_fraction),
            "mass_drift": drift,
        }),
    })
}

fn comparison(cfg: &ExperimentConfig, _rec: &mut Recorder) -> Result<Outcome, CliError> {
    let lo = cfg.initial_density()?;
    let hi = cfg.upper_density()?.expect("validated: comparison has an upper datum");
    let rep = comparison_experiment(&lo, &hi, &cfg.potential, &cfg.solver_config())?;
    Ok(Outcome {
        checks: vec![
            check("ordering", rep.max_violation, "<=", rep.tol, rep.max_violation <= rep.tol),
            check("mass_conservation", rep.mass_drift, "<=", cfg.conservation_tol, rep.mass_drift <= cfg.conservation_tol),
            completed(&rep.halted),
        ],
        summary: json!({ "ordering": rep }),
    })
}

fn convergence(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    let rho0 = cfg.initial_density()?;
    let c = &cfg.convergence;
    let opts = ConvergenceOptions {
        fit_window: c.fit_window,
        burn_in: c.burn_in,
        monotone_slack: c.monotone_slack,
    };
    let (rep, traj) = convergence_experiment(&rho0, &cfg.potential, &cfg.solver_config(), &opts)?;
    if cfg.save_trajectory {
        rec.trajectory(&traj)?;
    }
    let csv = rec.path("distance.csv");
    write_distance_csv(&csv, &rep.series)?;
    rec.add(csv);

    let mut checks = vec![
        check("mass_conservation", rep.mass_drift, "<=", cfg.conservation_tol, rep.mass_drift <= cfg.conservation_tol),
        completed(&rep.halted),
        check("l1_nonincreasing", rep.l1_max_increase, "<=", rep.monotone_slack, rep.monotone),
    ];
    if rep.convex && !rep.at_equilibrium {
        for (name, fit) in [("l1_rate", &rep.l1_fit), ("fb_rate", &rep.fb_fit)] {
            let alpha = fit.as_ref().map(|f| f.alpha);
            checks.push(check(name, alpha, ">", 0.0, alpha.is_some_and(|a| a > 0.0)));
        }
    }
    let flagged: Vec<f64> = rep.series.iter().filter(|r| r.flagged).map(|r| r.t).collect();
    let mut summary = serde_json::to_value(&rep).map_err(pmelab_core::PmeError::from)?;
    if let Value::Object(map) = &mut summary {
        map.remove("series");
        map.insert("distance_csv".into(), json!("distance.csv"));
        map.insert("flagged_times".into(), json!(flagged));
    }
    Ok(Outcome { checks, summary })
}

fn classification(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    let s = &cfg.classify;
    let rep = match (&s.candidate, &s.domain) {
        (Some(cand), Some(domain)) => classify(cand, &cfg.potential, cfg.m, domain, cfg.classify_tol(), s.fd_step)?,
        _ => {
            let traj = evolve_initial(cfg, rec, cfg.save_trajectory)?;
            classify_trajectory(&traj, s.tol)?
        }
    };
    let verdict = rep.verdict;
    let checks = match s.expect {
        Some(want) => vec![check("verdict", verdict, "==", want, verdict == want)],
        None => vec![check(
            "verdict",
            verdict,
            "!=",
            pmelab_core::verify::Verdict::Inconclusive,
            verdict != pmelab_core::verify::Verdict::Inconclusive,
        )],
    };
    Ok(Outcome {
        checks,
        summary: json!({ "classification": rep }),
    })
}

fn touching(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Outcome, CliError> {
    let s = &cfg.touching;
    let mut field = match (&s.candidate, &s.times) {
        (Some(cand), Some(times)) => SpaceTimeField::sample(cand, &cfg.grid, times, cfg.m, cfg.potential.clone())?,
        _ => SpaceTimeField::from_trajectory(&evolve_initial(cfg, rec, cfg.save_trajectory)?)?,
    };
    if s.time_shift != 0.0 {
        field = field.with_time_shift(s.time_shift)?;
    }
    let opts = TouchingOptions {
        count: s.count,
        seed: cfg.seed,
        tol: s.tol,
        windows: s.windows.clone(),
        slope_noise: s.slope_noise,
        curvature: s.curvature,
    };
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for &mode in &s.modes {
        let rep = touching_test(&field, mode, &opts)?;
        let name = format!("violations_{}", serde_json::to_value(mode).map_err(pmelab_core::PmeError::from)?.as_str().unwrap_or("mode"));
        checks.push(if s.expect_violations {
            check(&name, rep.violations, ">=", 1, rep.violations >= 1)
        } else {
            check(&name, rep.violations, "==", 0, rep.violations == 0)
        });
        reports.push(rep);
    }
    Ok(Outcome {
        checks,
        summary: json!({ "touching": reports, "seed": cfg.seed }),
    })
}
