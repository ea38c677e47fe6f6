//! Plain-text artifacts: snapshot files, CSV series and trajectory directories.
//!
//! Every number is written with 17 significant digits (the `%.17g` layout), which
//! round-trips binary64 exactly. Lines end in LF.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PmeError, Result};
use crate::field::{FieldKind, ScalarField};
use crate::freeboundary::DistanceRow;
use crate::grid::Grid;
use crate::potential::Potential;
use crate::solver::{Diagnostics, Snapshot, SolverConfig, Trajectory};

pub const DIAG_HEADER: &str = "t,mass,max_rho,support_radius,clamped_mass";
pub const DISTANCE_HEADER: &str = "t,l1_dist,sup_dist_fb,hausdorff_fb";

/// Format with 17 significant digits, trailing zeros trimmed, positional notation
/// for decimal exponents in `[-4, 17)` and scientific otherwise.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific layout");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mant) = mant.strip_prefix('-').map_or(("", mant), |m| ("-", m));
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    if (-4..17).contains(&exp) {
        let body = if exp >= 0 {
            let split = exp as usize + 1;
            format!("{}.{}", &digits[..split], &digits[split..])
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        let body = body.trim_end_matches('0').trim_end_matches('.');
        format!("{sign}{body}")
    } else {
        let frac = digits[1..].trim_end_matches('0');
        let m = if frac.is_empty() {
            digits[..1].to_string()
        } else {
            format!("{}.{frac}", &digits[..1])
        };
        format!("{sign}{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PmeError + '_ {
    move |source| PmeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, reason: impl Into<String>) -> PmeError {
    PmeError::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Serialize with sorted keys and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    // `serde_json::Value` keeps object keys in a BTreeMap, so this orders them
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e.to_string()))
}

/// Snapshot text: header `# d h N kind t`, then one value per line, row-major.
/// `N` is the number of values.
pub fn snapshot_to_string(field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    let mut s = format!(
        "# {} {} {} {} {}\n",
        g.dim(),
        fmt17(g.h()),
        g.len(),
        field.kind().as_str(),
        fmt17(t)
    );
    for v in field.values() {
        s.push_str(&fmt17(*v));
        s.push('\n');
    }
    s
}

pub fn write_snapshot(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    write_text(path, &snapshot_to_string(field, t))
}

/// Read a snapshot written on `grid`. The header must match the grid's dimension,
/// spacing and cell count.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<(ScalarField, f64)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let fields: Vec<&str> = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, "header must start with '#'"))?
        .split_whitespace()
        .collect();
    let [d, h, n, kind, t] = fields[..] else {
        return Err(parse_err(path, format!("header needs `d h N kind t`, got `{header}`")));
    };
    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|e| parse_err(path, format!("{what}: {e}")));
    let d: usize = d.parse().map_err(|e| parse_err(path, format!("d: {e}")))?;
    let n: usize = n.parse().map_err(|e| parse_err(path, format!("N: {e}")))?;
    let h = num(h, "h")?;
    let t = num(t, "t")?;
    let kind = match kind {
        "density" => FieldKind::Density,
        "pressure" => FieldKind::Pressure,
        other => return Err(parse_err(path, format!("unknown kind `{other}`"))),
    };
    if d != grid.dim() || n != grid.len() || (h - grid.h()).abs() > 1e-12 * grid.h() {
        return Err(parse_err(
            path,
            format!("header (d={d}, h={h}, N={n}) does not match the grid (d={}, h={}, N={})", grid.dim(), grid.h(), grid.len()),
        ));
    }
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| parse_err(path, format!("value {i}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != n {
        return Err(parse_err(path, format!("{} values, header says {n}", values.len())));
    }
    Ok((ScalarField::new(grid.clone(), values, kind)?, t))
}

/// CSV with a fixed header and numeric rows.
pub fn csv_to_string(header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| fmt17(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    write_text(path, &csv_to_string(header, rows))
}

/// Read a numeric CSV, checking the header.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(parse_err(path, format!("header `{h}`, expected `{header}`"))),
        None => return Err(parse_err(path, "empty file")),
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let row = l
                .split(',')
                .map(|c| c.parse::<f64>().map_err(|e| parse_err(path, format!("row {}: {e}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != width {
                return Err(parse_err(path, format!("row {} has {} columns, expected {width}", i + 1, row.len())));
            }
            Ok(row)
        })
        .collect()
}

fn diag_rows(diags: &[Diagnostics]) -> Vec<Vec<f64>> {
    diags
        .iter()
        .map(|d| vec![d.t, d.mass, d.max_rho, d.support_radius, d.clamped_mass])
        .collect()
}

pub fn write_diagnostics(path: &Path, diags: &[Diagnostics]) -> Result<()> {
    write_csv(path, DIAG_HEADER, &diag_rows(diags))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<Diagnostics>> {
    Ok(read_csv(path, DIAG_HEADER)?
        .into_iter()
        .map(|r| Diagnostics {
            t: r[0],
            mass: r[1],
            max_rho: r[2],
            support_radius: r[3],
            clamped_mass: r[4],
        })
        .collect())
}

/// Distance series CSV. The threshold-check flag is not part of the documented
/// columns and is reported alongside the series instead.
pub fn write_distance_csv(path: &Path, rows: &[DistanceRow]) -> Result<()> {
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.t, r.l1_dist, r.sup_dist_fb, r.hausdorff_fb])
        .collect();
    write_csv(path, DISTANCE_HEADER, &rows)
}

/// Read a distance CSV; `flagged` comes back false.
pub fn read_distance_csv(path: &Path) -> Result<Vec<DistanceRow>> {
    Ok(read_csv(path, DISTANCE_HEADER)?
        .into_iter()
        .map(|r| DistanceRow {
            t: r[0],
            l1_dist: r[1],
            sup_dist_fb: r[2],
            hausdorff_fb: r[3],
            flagged: false,
        })
        .collect())
}

/// `manifest.json` of a trajectory directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub grid: Grid,
    pub config: SolverConfig,
    pub potential: Potential,
    pub snapshots: Vec<SnapshotEntry>,
    pub steps: u64,
    pub halted: Option<String>,
    pub boundary_flux: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub t: f64,
}

/// Write `diag.csv`, `snap_<k>.txt` and finally `manifest.json` into `dir`.
/// Returns the written paths, manifest last.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let diag = dir.join("diag.csv");
    write_diagnostics(&diag, &traj.diagnostics)?;
    written.push(diag);
    let mut entries = Vec::new();
    for (k, s) in traj.snapshots.iter().enumerate() {
        let name = format!("snap_{k}.txt");
        let p = dir.join(&name);
        write_snapshot(&p, &s.rho, s.t)?;
        written.push(p);
        entries.push(SnapshotEntry { file: name, t: s.t });
    }
    let manifest = TrajectoryManifest {
        grid: traj.grid().clone(),
        config: traj.config.clone(),
        potential: traj.potential.clone(),
        snapshots: entries,
        steps: traj.steps,
        halted: traj.halted.clone(),
        boundary_flux: traj.boundary_flux,
    };
    let mp = dir.join("manifest.json");
    write_json(&mp, &manifest)?;
    written.push(mp);
    Ok(written)
}

/// Load a trajectory directory written by [`write_trajectory`].
pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let manifest: TrajectoryManifest = read_json(&dir.join("manifest.json"))?;
    let snapshots = manifest
        .snapshots
        .iter()
        .map(|e| {
            let (rho, t) = read_snapshot(&dir.join(&e.file), &manifest.grid)?;
            Ok(Snapshot { t, rho })
        })
        .collect::<Result<Vec<_>>>()?;
    if snapshots.is_empty() {
        return Err(parse_err(dir, "manifest lists no snapshots"));
    }
    Ok(Trajectory {
        config: manifest.config,
        potential: manifest.potential,
        snapshots,
        diagnostics: read_diagnostics(&dir.join("diag.csv"))?,
        steps: manifest.steps,
        halted: manifest.halted,
        boundary_flux: manifest.boundary_flux,
    })
}
