use std::path::Path;
use std::process::Command;

use pmelab_cli::{read_manifest, verify_manifest, Status};
use serde_json::{json, Value};

fn pmelab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pmelab")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

fn classify(expect: &str) -> Value {
    json!({
        "kind": "classify",
        "grid": {"lower": [-4], "upper": [4], "cells": [40]},
        "m": 2,
        "classify": {
            "candidate": {"type": "barenblatt", "tau": 1, "c": 1, "m": 2, "d": 1},
            "domain": {"center": [0], "radius": 3, "times": [0, 0.5, 1], "points_per_axis": 41},
            "expect": expect
        }
    })
}

#[test]
fn test_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pass = write(d, "pass.json", &classify("solution"));
    let fail = write(d, "fail.json", &classify("subsolution"));
    let out = d.join("o").to_string_lossy().into_owned();

    let (code, stdout, _) = pmelab(&["verify", "--config", &pass, "--out", &out]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(read_manifest(Path::new(&out)).unwrap().status, Status::Passed);

    let (code, stdout, _) = pmelab(&["verify", "--config", &fail, "--out", &out]);
    assert_eq!(code, 1);
    assert!(stdout.contains("failed (verdict)"), "{stdout}");

    let mut bad = classify("solution");
    bad["m"] = json!(1.0);
    let (code, _, stderr) = pmelab(&["verify", "--config", &write(d, "bad.json", &bad), "--out", &out]);
    assert_eq!(code, 2);
    assert!(stderr.contains("`m`") && stderr.contains("m > 1"), "{stderr}");

    // a kind the subcommand does not run
    let (code, _, stderr) = pmelab(&["simulate", "--config", &pass, "--out", &out]);
    assert_eq!(code, 2);
    assert!(stderr.contains("kind"), "{stderr}");

    let (code, _, stderr) = pmelab(&["verify", "--config", &d.join("nope.json").to_string_lossy(), "--out", &out]);
    assert_eq!(code, 2);
    assert!(stderr.contains("nope.json"), "{stderr}");

    let (code, _, _) = pmelab(&["verify", "--config", &pass]);
    assert_eq!(code, 2, "no output directory anywhere");

    let (code, _, _) = pmelab(&["verify", "--config", &pass, "--out", &out, "--jobs", "0"]);
    assert_eq!(code, 2);

    // runtime failure inside a pipeline
    let edge = json!({
        "kind": "simulate",
        "grid": {"lower": [-1], "upper": [1], "cells": [50]},
        "m": 2,
        "initial": {"type": "bump", "center": [0.9], "width": 0.5}
    });
    let (code, _, stderr) = pmelab(&["simulate", "--config", &write(d, "edge.json", &edge), "--out", &out]);
    assert_eq!(code, 2);
    assert!(stderr.contains("margin"), "{stderr}");
    assert_eq!(read_manifest(Path::new(&out)).unwrap().status, Status::Error);
}

#[test]
fn test_jobs_run_a_config_list_in_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let list = json!([classify("solution"), classify("subsolution"), classify("solution")]);
    let cfg = write(d, "list.json", &list);
    let out = d.join("runs");
    let (code, stdout, _) = pmelab(&["verify", "--config", &cfg, "--out", &out.to_string_lossy(), "--jobs", "3"]);
    assert_eq!(code, 1, "the worst job decides the exit code: {stdout}");
    for (i, want) in [Status::Passed, Status::Failed, Status::Passed].into_iter().enumerate() {
        let sub = out.join(format!("{i}-classify"));
        assert_eq!(read_manifest(&sub).unwrap().status, want);
        assert!(verify_manifest(&sub).unwrap().is_empty());
    }

    // explicit out directories in the list must not collide
    let mut a = classify("solution");
    a["out"] = json!(d.join("same"));
    let (code, _, stderr) = pmelab(&["verify", "--config", &write(d, "dup.json", &json!([a.clone(), a])), "--jobs", "2"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("[1].out"), "{stderr}");
}

#[test]
fn test_seed_flag_overrides_the_config_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let touching = json!({
        "kind": "touching",
        "grid": {"lower": [-4], "upper": [4], "cells": [200]},
        "m": 2,
        "seed": 1,
        "touching": {
            "count": 30,
            "candidate": {"type": "barenblatt", "tau": 1, "c": 1, "m": 2, "d": 1},
            "times": [0, 0.05, 0.1, 0.15, 0.2]
        }
    });
    let cfg = write(d, "t.json", &touching);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = d.join(name);
            let (code, stdout, stderr) = pmelab(&["verify", "--config", &cfg, "--out", &out.to_string_lossy(), "--seed", "77"]);
            assert_eq!(code, 0, "{stdout}{stderr}");
            read_manifest(&out).unwrap()
        })
        .collect();
    assert_eq!(runs[0].config.seed, 77);
    assert_eq!(runs[0].summary, runs[1].summary);
}

#[test]
fn test_help_lists_the_subcommands() {
    let (code, stdout, _) = pmelab(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["simulate", "verify", "convergence", "oracle"] {
        assert!(stdout.contains(sub), "{stdout}");
    }
    let (code, stdout, _) = pmelab(&["oracle", "--help"]);
    assert_eq!(code, 0);
    for flag in ["--config", "--out", "--seed", "--jobs"] {
        assert!(stdout.contains(flag), "{stdout}");
    }
}
