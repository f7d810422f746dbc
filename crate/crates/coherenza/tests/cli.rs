//! End-to-end tests of the `coherenza` binary: exit codes, file layout,
//! format chaining and the stability of the manifest's config hash.

use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn coherenza(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coherenza"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    coherenza(args).output().expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_files(dir: &Path, names: &[&str]) {
    for name in names {
        assert!(dir.join(name).is_file(), "expected {name} in {dir:?}");
    }
}

#[test]
fn synth_writes_field_snapshot() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&["synth", "--synthetic", "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_files(&out, &["field.bin", "field.csv", "manifest.json"]);
    assert!(!out.join("summary.json").exists());
}

#[test]
fn analyze_writes_full_tree() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "analyze",
        "--synthetic",
        "rows=4,cols=4,years=40,seed=1",
        "--k",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_files(
        &out,
        &[
            "field.bin",
            "field.csv",
            "aimr.csv",
            "phase_national.csv",
            "phase_local.csv",
            "pc_histogram.csv",
            "transitions_national.csv",
            "transitions_local.csv",
            "extremes_years.csv",
            "extremes_local_locational.csv",
            "extremes_local_spatial.csv",
            "phase_extremes_local.csv",
            "phase_agreement_extremes.csv",
            "coherence_table.csv",
            "clusters_phase.csv",
            "clusters_phase.geojson",
            "clusters_phase.svg",
            "map_agreement.geojson",
            "map_agreement.svg",
            "summary.json",
            "manifest.json",
        ],
    );
}

#[test]
fn each_stage_command_writes_its_table() {
    let cases: &[(&str, &str)] = &[
        ("phase", "phase_national.csv"),
        ("extremes", "extremes_years.csv"),
        ("coherence", "coherence_table.csv"),
        ("cluster", "clusters_phase.csv"),
    ];
    for (subcommand, expected) in cases {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("run");
        let output = run(&[
            subcommand,
            "--synthetic",
            "rows=4,cols=4,years=30,seed=2",
            "--k",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&output), 0, "{subcommand}: {}", stderr(&output));
        assert_files(&out, &[expected, "manifest.json"]);
        assert!(
            !out.join("field.bin").exists(),
            "{subcommand} should not snapshot the field"
        );
    }
}

#[test]
fn report_emits_maps_without_field_snapshot() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "report",
        "--synthetic",
        "rows=4,cols=4,years=30,seed=2",
        "--k",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_files(
        &out,
        &["map_agreement.svg", "summary.json", "manifest.json"],
    );
    assert!(!out.join("field.bin").exists());
}

#[test]
fn ingest_then_binary_format_chain() {
    let dir = TempDir::new().unwrap();
    let synth_out = dir.path().join("synth");
    let ingest_out = dir.path().join("ingest");
    let phase_out = dir.path().join("phase");

    let output = run(&[
        "synth",
        "--synthetic",
        "seed=5",
        "--out",
        synth_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));

    let csv = synth_out.join("field.csv");
    let output = run(&[
        "ingest",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        ingest_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_files(&ingest_out, &["field.bin", "field.csv"]);

    let bin = ingest_out.join("field.bin");
    let output = run(&[
        "phase",
        "--input",
        bin.to_str().unwrap(),
        "--format",
        "bin",
        "--out",
        phase_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_files(
        &phase_out,
        &["phase_national.csv", "transitions_national.csv"],
    );

    // Once through CSV text the snapshot is stable: re-ingesting the
    // re-emitted CSV reproduces field.bin byte for byte.
    let reingest_out = dir.path().join("reingest");
    let output = run(&[
        "ingest",
        "--input",
        ingest_out.join("field.csv").to_str().unwrap(),
        "--out",
        reingest_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    assert_eq!(
        std::fs::read(ingest_out.join("field.bin")).unwrap(),
        std::fs::read(reingest_out.join("field.bin")).unwrap()
    );
}

#[test]
fn ingest_aggregates_monthly_tables() {
    let dir = TempDir::new().unwrap();
    let monthly = dir.path().join("monthly.csv");
    let mut text = String::from("year,month,lat,lon,rain_mm\n");
    for year in [1901, 1902] {
        for month in 1..=12 {
            for lon in [70, 71] {
                text.push_str(&format!("{year},{month},10,{lon},{}\n", month * 5));
            }
        }
    }
    std::fs::write(&monthly, text).unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "ingest",
        "--input",
        monthly.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
    let annual = std::fs::read_to_string(out.join("field.csv")).unwrap();
    let mut lines = annual.lines();
    assert_eq!(lines.next(), Some("year,lat,lon,rain_mm"));
    // 5 + 10 + ... + 60 = 390 per cell-year.
    assert_eq!(lines.next(), Some("1901,10,70,390"));
}

#[test]
fn missing_input_file_is_input_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "phase",
        "--input",
        "/nonexistent/rainfall.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "{}", stderr(&output));
}

#[test]
fn malformed_csv_is_input_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "year,lat,lon,rain_mm\n1901,ten,70.5,800\n").unwrap();
    let out = dir.path().join("run");
    let output = run(&[
        "ingest",
        "--input",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "{}", stderr(&output));
}

#[test]
fn csv_passed_as_binary_is_input_error() {
    let dir = TempDir::new().unwrap();
    let synth_out = dir.path().join("synth");
    run(&["synth", "--synthetic", "--out", synth_out.to_str().unwrap()]);
    let out = dir.path().join("run");
    let output = run(&[
        "phase",
        "--input",
        synth_out.join("field.csv").to_str().unwrap(),
        "--format",
        "bin",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "{}", stderr(&output));
}

#[test]
fn bad_flag_value_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    for args in [
        vec!["analyze", "--synthetic", "--tie", "sometimes", "--out"],
        vec!["analyze", "--synthetic", "--sigma", "bogus", "--out"],
        vec!["bogus-subcommand", "--out"],
    ] {
        let mut full = args.clone();
        full.push(out.to_str().unwrap());
        let output = run(&full);
        assert_eq!(exit_code(&output), 4, "args {args:?}: {}", stderr(&output));
    }
}

#[test]
fn conflicting_inputs_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    // --input plus --synthetic.
    let output = run(&[
        "analyze",
        "--input",
        "whatever.csv",
        "--synthetic",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 4, "{}", stderr(&output));
    // No input at all on a non-synth command.
    let output = run(&["analyze", "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 4, "{}", stderr(&output));
    // Unknown synthetic setting.
    let output = run(&[
        "synth",
        "--synthetic",
        "rows=4,wobble=2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 4, "{}", stderr(&output));
}

#[test]
fn out_of_range_k_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    for k in ["1", "17"] {
        // 4x4 synthetic grid has 16 locations; valid k is 2..=16.
        let output = run(&[
            "cluster",
            "--synthetic",
            "rows=4,cols=4,years=30",
            "--k",
            k,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&output), 4, "k = {k}: {}", stderr(&output));
    }
}

#[test]
fn bad_thread_env_is_config_error() {
    let dir = TempDir::new().unwrap();
    for value in ["abc", "0", "-1"] {
        let out = dir.path().join(format!("run-{value}"));
        let output = coherenza(&["synth", "--synthetic", "--out", out.to_str().unwrap()])
            .env("COHERENZA_THREADS", value)
            .output()
            .expect("binary runs");
        assert_eq!(
            exit_code(&output),
            4,
            "COHERENZA_THREADS={value}: {}",
            stderr(&output)
        );
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(exit_code(&run(&["--help"])), 0);
    assert_eq!(exit_code(&run(&["--version"])), 0);
    assert_eq!(exit_code(&run(&["analyze", "--help"])), 0);
}

fn config_hash(out: &Path) -> String {
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    manifest["config_hash"].as_str().unwrap().to_owned()
}

#[test]
fn config_hash_tracks_analysis_settings_not_emit() {
    let dir = TempDir::new().unwrap();
    let base: &[&str] = &[
        "analyze",
        "--synthetic",
        "rows=4,cols=4,years=30,seed=7",
        "--k",
        "3",
    ];
    let run_with = |name: &str, extra: &[&str]| -> String {
        let out = dir.path().join(name);
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        args.push("--out");
        args.push(out.to_str().unwrap());
        let output = run(&args);
        assert_eq!(exit_code(&output), 0, "{}", stderr(&output));
        config_hash(&out)
    };

    let everything = run_with("all", &[]);
    let csv_only = run_with("csv", &["--emit", "csv"]);
    assert_eq!(
        everything, csv_only,
        "emit selection must not move the hash"
    );
    assert!(
        !dir.path().join("csv").join("map_agreement.svg").exists(),
        "--emit csv still wrote an svg"
    );

    let other_seed = run_with("seed", &["--seed", "99"]);
    assert_ne!(
        everything, other_seed,
        "clustering seed is analysis-relevant"
    );

    let other_tie = run_with("tie", &["--tie", "drop"]);
    assert_ne!(everything, other_tie, "tie rule is analysis-relevant");
}
