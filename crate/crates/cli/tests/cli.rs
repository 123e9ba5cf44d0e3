use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: &[&str] = &[
    "gexpect",
    "cylinder",
    "doob",
    "solve-pde",
    "gbsde",
    "convergence",
    "curvature",
    "sensitivity-x",
    "sensitivity-t",
    "kink",
    "semiconvexity",
    "dp-check",
    "counterexample",
    "stability",
];

fn glab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glab"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("GLAB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gexpect_quadratic_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = glab(
        &[
            "gexpect",
            "--payoff",
            "quadratic",
            "--sigma-high",
            "1",
            "--sigma-low",
            "0",
            "--T",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
    let v = summary(dir.path())["values"]["value"].as_f64().unwrap();
    assert!((v - 1.0).abs() < 1e-2, "{v}");
    assert!(dir.path().join("gexpect.csv").exists());
}

#[test]
fn doob_constant_for_two_and_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = glab(
        &[
            "doob",
            "--p",
            "2",
            "--p-prime",
            "4",
            "--steps",
            "8",
            "--xi",
            "abs-terminal",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let report = &summary(dir.path())["values"]["report"];
    assert!((report["C"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(report["margin"].as_f64().unwrap() >= 0.0);
}

#[test]
fn counterexample_slope_passes_assert() {
    let dir = tempfile::tempdir().unwrap();
    let o = glab(
        &[
            "counterexample",
            "--T",
            "1",
            "--eps",
            "0.2,0.1,0.05,0.025",
            "--assert",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let slope = summary(dir.path())["values"]["report"]["estimate_slope"]
        .as_f64()
        .unwrap();
    assert!((slope + 0.4).abs() <= 0.02);
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in SUBCOMMANDS {
        let o = glab(&[cmd, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        assert!(stdout(&o).contains("--dry-run"), "{cmd}");
    }
}

#[test]
fn every_subcommand_dry_runs_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in SUBCOMMANDS {
        let o = glab(&[cmd, "--dry-run"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}");
    }
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn artifacts_are_reproducible_across_runs_and_workers() {
    let args = [
        "sensitivity-x",
        "--paths",
        "400",
        "--mc-steps",
        "40",
        "--seed",
        "9",
        "--nx",
        "101",
    ];
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    glab(&args, dirs[0].path());
    glab(&args, dirs[1].path());
    let mut sequential = args.to_vec();
    sequential.extend(["--workers", "1"]);
    let o = glab(&sequential, dirs[2].path());
    assert_eq!(o.status.code(), Some(0));
    for name in ["summary.json", "sensitivity.csv"] {
        let first = fs::read(dirs[0].path().join(name)).unwrap();
        assert_eq!(
            first,
            fs::read(dirs[1].path().join(name)).unwrap(),
            "{name}"
        );
        if name != "summary.json" {
            // The summary echoes the worker count; the data must not move.
            assert_eq!(
                first,
                fs::read(dirs[2].path().join(name)).unwrap(),
                "{name}"
            );
        }
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "[generator]\nsigma_low = 0.0\nsigma_high = 2.0\n[grid]\nnx = 201\nT = 1.0\n[schedule]\npayoff = \"quadratic\"\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    glab(&["gexpect", "--config", cfg], dir.path());
    let from_file = summary(dir.path())["values"]["value"].as_f64().unwrap();
    assert!((from_file - 4.0).abs() < 2e-2, "{from_file}");
    glab(
        &["gexpect", "--config", cfg, "--sigma-high", "1"],
        dir.path(),
    );
    let overridden = summary(dir.path());
    assert!((overridden["values"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-2);
    assert_eq!(
        overridden["parameters"]["config"]["sigma_high"].as_f64(),
        Some(1.0)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(glab(&["bogus"], dir.path()).status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[grid]\nnx = 101\nunknown = 3\n").unwrap();
    let o = glab(&["gexpect", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(
        glab(&["gexpect", "--preset", "nope"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        glab(
            &["gexpect", "--sigma-low", "2", "--sigma-high", "1"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        glab(&["solve-pde", "--cfl-safety", "1.5"], dir.path())
            .status
            .code(),
        Some(2)
    );

    // A two-step lattice is too coarse to agree with the PDE on |x|.
    let o = glab(
        &["gexpect", "--payoff", "abs", "--steps", "2", "--assert"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_glab"))
        .args(["doob"])
        .env("GLAB_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("doob.csv").exists());
}
