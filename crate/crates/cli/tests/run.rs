use std::path::Path;

use pmelab_cli::run::ORACLE_HEADER;
use pmelab_cli::{emit_csv, emit_manifest, parse_config, read_manifest, run_experiment, verify_manifest, Status};
use pmelab_core::io::{read_csv, read_distance_csv, DISTANCE_HEADER};
use serde_json::{json, Value};

fn config(v: Value, out: &Path) -> pmelab_cli::ExperimentConfig {
    let mut v = v;
    v["out"] = json!(out);
    parse_config(&v.to_string()).unwrap()
}

fn convergence_json() -> Value {
    json!({
        "kind": "convergence",
        "grid": {"lower": [-2], "upper": [2], "cells": [200]},
        "m": 2,
        "potential": {"form": "quadratic"},
        "mass": 2.0 / 3.0,
        "initial": {"type": "bump", "center": [0.4], "width": 0.6},
        "solver": {"end_time": 4, "output_interval": 0.1}
    })
}

fn touching_json() -> Value {
    json!({
        "kind": "touching",
        "grid": {"lower": [-4], "upper": [4], "cells": [400]},
        "m": 2,
        "seed": 11,
        "touching": {
            "count": 60,
            "candidate": {"type": "barenblatt", "tau": 1, "c": 1, "m": 2, "d": 1},
            "times": [0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        }
    })
}

#[test]
fn test_barenblatt_oracle_reports_error_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        json!({"kind": "barenblatt-oracle", "grid": {"lower": [-10], "upper": [10], "cells": [1000]}, "m": 2}),
        dir.path(),
    );
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.status, Status::Passed, "{:?}", m.checks);
    let e = m.summary["linf_error"].as_f64().unwrap();
    let e2 = m.summary["linf_error_refined"].as_f64().unwrap();
    let order = m.summary["convergence_order"].as_f64().unwrap();
    assert_eq!(m.summary["h"], json!(0.02));
    // a first-order front error: halving h about halves the error
    assert!(e > 0.0 && e <= 0.02, "{e}");
    assert!((0.75..1.5).contains(&order), "order {order}");
    assert!((order - (e / e2).log2()).abs() < 1e-12);
    let rows = read_csv(&dir.path().join("oracle.csv"), ORACLE_HEADER).unwrap();
    assert_eq!(rows, vec![vec![0.02, e], vec![0.01, e2]]);
    assert!(verify_manifest(dir.path()).unwrap().is_empty());
}

#[test]
fn test_convergence_manifest_has_c0_two_fits_and_distance_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(convergence_json(), dir.path())).unwrap();
    assert_eq!(m.status, Status::Passed, "{:?}", m.checks);
    // (2/3) C0^{3/2} = 2/3 gives C0 = 1; the grid mass adds O(h^2)
    let c0 = m.summary["c0"].as_f64().unwrap();
    assert!((c0 - 1.0).abs() < 1e-4, "{c0}");
    for fit in ["l1_fit", "fb_fit"] {
        let f = m.summary[fit].as_object().unwrap_or_else(|| panic!("{fit} missing"));
        let mut keys: Vec<&str> = f.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["K", "alpha", "r2", "t_a", "t_b"]);
        assert!(f["alpha"].as_f64().unwrap() > 0.0);
    }
    // the quadratic potential has convexity modulus 2, which the L1 distance attains
    let alpha = m.summary["l1_fit"]["alpha"].as_f64().unwrap();
    assert!((alpha - 2.0).abs() < 0.2, "{alpha}");
    let listed: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(listed, ["distance.csv"]);
    let series = read_distance_csv(&dir.path().join("distance.csv")).unwrap();
    assert_eq!(series.len(), 41);
    let text = std::fs::read_to_string(dir.path().join("distance.csv")).unwrap();
    assert!(text.starts_with(&format!("{DISTANCE_HEADER}\n")));
    assert!(!text.contains('\r'));
}

#[test]
fn test_same_config_and_seed_give_identical_csvs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut sim = convergence_json();
    sim["save_trajectory"] = json!(true);
    let ma = run_experiment(&config(sim.clone(), a.path())).unwrap();
    let mb = run_experiment(&config(sim, b.path())).unwrap();
    assert!(ma.artifacts.len() > 3);
    assert_eq!(ma.artifacts, mb.artifacts);
    for art in &ma.artifacts {
        let (x, y) = (std::fs::read(a.path().join(&art.path)).unwrap(), std::fs::read(b.path().join(&art.path)).unwrap());
        assert_eq!(x, y, "{}", art.path);
    }

    let ta = run_experiment(&config(touching_json(), a.path())).unwrap();
    let tb = run_experiment(&config(touching_json(), b.path())).unwrap();
    assert_eq!(ta.summary, tb.summary);
    let mut other = touching_json();
    other["seed"] = json!(12);
    let tc = run_experiment(&config(other, b.path())).unwrap();
    assert_ne!(ta.summary["touching"], tc.summary["touching"]);
}

#[test]
fn test_manifest_lists_every_file_with_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        json!({
            "kind": "simulate",
            "grid": {"lower": [-2], "upper": [2], "cells": [80]},
            "m": 2,
            "potential": {"form": "quadratic"},
            "initial": {"type": "bump", "center": [0], "width": 0.5},
            "solver": {"end_time": 0.3}
        }),
        dir.path(),
    );
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.status, Status::Passed, "{:?}", m.checks);
    let mut on_disk: Vec<String> = walk(dir.path())
        .into_iter()
        .map(|p| p.strip_prefix(dir.path()).unwrap().to_string_lossy().replace('\\', "/"))
        .filter(|p| p != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    assert!(listed.contains(&"trajectory/diag.csv".to_string()));
    assert!(listed.contains(&"trajectory/snap_3.txt".to_string()));
    assert!(verify_manifest(dir.path()).unwrap().is_empty());

    assert_eq!(read_manifest(dir.path()).unwrap(), m);
    std::fs::write(dir.path().join("trajectory/snap_0.txt"), "tampered\n").unwrap();
    assert_eq!(verify_manifest(dir.path()).unwrap(), ["trajectory/snap_0.txt"]);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn test_pipeline_error_writes_a_failed_run_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // support touching the box edge violates the margin
    let cfg = config(
        json!({
            "kind": "simulate",
            "grid": {"lower": [-1], "upper": [1], "cells": [50]},
            "m": 2,
            "initial": {"type": "bump", "center": [0.9], "width": 0.5}
        }),
        dir.path(),
    );
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.status, Status::Error);
    assert_eq!(m.status.exit_code(), 2);
    assert!(m.error.as_deref().unwrap().contains("margin"), "{:?}", m.error);
    assert_eq!(read_manifest(dir.path()).unwrap().error, m.error);
}

#[test]
fn test_failed_checks_give_status_failed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        json!({
            "kind": "classify",
            "grid": {"lower": [-4], "upper": [4], "cells": [40]},
            "m": 2,
            "classify": {
                "candidate": {"type": "barenblatt", "tau": 1, "c": 1, "m": 2, "d": 1},
                "domain": {"center": [0], "radius": 3, "times": [0, 0.5, 1]},
                "expect": "supersolution"
            }
        }),
        dir.path(),
    );
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.checks[0].value, json!("solution"));
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.status.exit_code(), 1);
}

#[test]
fn test_comparison_and_touching_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let cmp = config(
        json!({
            "kind": "comparison",
            "grid": {"lower": [-2], "upper": [2], "cells": [96]},
            "m": 2,
            "potential": {"form": "quadratic"},
            "mass": 0.3,
            "initial": {"type": "bump", "center": [0.1], "width": 0.4},
            "comparison": {"upper": {"type": "bump", "center": [0.1], "width": 0.6}, "upper_mass": 1.0},
            "solver": {"end_time": 0.5, "output_interval": 0.05}
        }),
        dir.path(),
    );
    let m = run_experiment(&cmp).unwrap();
    assert_eq!(m.status, Status::Passed, "{:?}", m.checks);
    assert_eq!(m.summary["ordering"]["max_violation"], json!(0.0));

    let t = run_experiment(&config(touching_json(), dir.path())).unwrap();
    assert_eq!(t.status, Status::Passed, "{:?}", t.checks);
    assert!(t.summary["touching"][0]["touched"].as_u64().unwrap() > 0);

    let mut shifted = touching_json();
    shifted["touching"]["time_shift"] = json!(1.0);
    shifted["touching"]["modes"] = json!(["above"]);
    let s = run_experiment(&config(shifted.clone(), dir.path())).unwrap();
    assert_eq!(s.status, Status::Failed);
    shifted["touching"]["expect_violations"] = json!(true);
    let s = run_experiment(&config(shifted, dir.path())).unwrap();
    assert_eq!(s.status, Status::Passed, "{:?}", s.checks);
}

#[test]
fn test_emission_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(convergence_json(), dir.path())).unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    emit_manifest(&m, &a).unwrap();
    emit_manifest(&m, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let csv = dir.path().join("empty.csv");
    emit_csv(&csv, DISTANCE_HEADER, &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), format!("{DISTANCE_HEADER}\n"));
    emit_csv(&csv, "x", &[vec![1.0 / 3.0]]).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "x\n0.33333333333333331\n");

    let err = emit_csv(&dir.path().join("missing/sub/x.csv"), "x", &[]).unwrap_err().to_string();
    assert!(err.contains("missing"), "{err}");
}
