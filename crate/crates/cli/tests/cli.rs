use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use sgplfm_cli::config::Variant;
use sgplfm_cli::report::write_outputs;
use sgplfm_cli::{run_experiment, run_sweep, CliError, ExperimentConfig, SweepAxis};

fn reference_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = ["signal.t_f=1.5", "optimizer.budget=60"].iter().map(|s| s.to_string()).collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::from_file(&reference_path(), &o).unwrap()
}

fn config_error_field(err: CliError) -> String {
    match err {
        CliError::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn reference_config_is_valid() {
    let cfg = ExperimentConfig::from_file(&reference_path(), &[]).unwrap();
    assert_eq!(cfg.variants, vec![Variant::Standard, Variant::Switching]);
    assert_eq!(cfg.signal.f_s, 500.0);
    assert_eq!(cfg.switching.filter_components, 3);
}

#[test]
fn validation_errors_name_the_field() {
    let path = reference_path();
    let err = ExperimentConfig::from_file(&path, &["excitation.source=\"csv\"".into()]).unwrap_err();
    assert_eq!(config_error_field(err), "excitation.csv_path");
    let err = ExperimentConfig::from_file(
        &path,
        &["excitation.source=\"csv\"".into(), "excitation.csv_path=\"missing.csv\"".into()],
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("excitation.csv_path") && msg.contains("missing.csv"), "{msg}");
    let err = ExperimentConfig::from_file(&path, &["switching.persistence=1.5".into()]).unwrap_err();
    assert_eq!(config_error_field(err), "switching.persistence");
    let err = ExperimentConfig::from_file(&path, &["signal.f_s=-1".into()]).unwrap_err();
    assert_eq!(config_error_field(err), "signal.f_s");
    let err = ExperimentConfig::from_file(&path, &["signal.bogus=1".into()]).unwrap_err();
    assert!(err.to_string().contains("bogus"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = small(&[]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_outputs(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert!(fa.contains_key("report.json") && fa.contains_key("table.csv"));
    assert!(fa.contains_key("steps_switching_i3_j3.csv") && fa.contains_key("friction_curve_standard.csv"));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs");
    }
    let table = String::from_utf8(fa["table.csv"].clone()).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("variant,nmse_z_permyriad"));
    assert!(lines[1].starts_with("standard,") && lines[2].starts_with("switching_i3_j3,"));
}

#[test]
fn noiseless_known_parameters_track_displacement() {
    let cfg = small(&["signal.snr_db=inf"]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.report.dataset.noise_sd, 0.0);
    for v in &out.report.variants {
        assert!(v.scores.nmse_z < 1e-4, "{:?}: NMSE[z] = {}%", v.variant, v.scores.nmse_z);
    }
}

#[test]
fn single_value_sweep_matches_identify() {
    let cfg = small(&["variants=[\"switching\"]"]);
    let table = run_sweep(&cfg, SweepAxis::Snr, &[cfg.signal.snr_db]).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    let (row, rep) = (&table.rows[0], &out.report.variants[0]);
    assert_eq!(row.nmse_friction, rep.scores.nmse_friction);
    assert_eq!(row.regime_error, rep.regime_error);
    assert_eq!(row.prediction_nmse, rep.prediction_nmse);
    assert_eq!(row.parameter_error, rep.parameter_error);
    assert_eq!(row.detected_stops, rep.detected_stops);
}

#[test]
fn sweep_axis_parsing() {
    assert_eq!("snr".parse::<SweepAxis>().unwrap(), SweepAxis::Snr);
    assert_eq!("t_f".parse::<SweepAxis>().unwrap(), SweepAxis::TF);
    assert_eq!("f_s".parse::<SweepAxis>().unwrap(), SweepAxis::FS);
    assert!("mass".parse::<SweepAxis>().is_err());
    assert_eq!(sgplfm_cli::sweep::parse_value("inf").unwrap(), f64::INFINITY);
    assert!(sgplfm_cli::sweep::parse_value("fast").is_err());
    let cfg = small(&[]);
    assert!(run_sweep(&cfg, SweepAxis::FS, &[0.0]).is_err());
    assert!(run_sweep(&cfg, SweepAxis::FS, &[]).is_err());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgplfm"))
}

#[test]
fn binary_validates_configs() {
    let ok = bin().arg("validate-config").arg(reference_path()).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("ok"));
    let bad = bin()
        .args(["validate-config", "--set", "excitation.source=\"csv\""])
        .arg(reference_path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("excitation.csv_path"));
}

#[test]
fn simulated_csv_feeds_identification() {
    let dir = tempfile::tempdir().unwrap();
    let sim = bin()
        .args(["simulate", "--set", "signal.t_f=1.5", "-o"])
        .arg(dir.path())
        .arg(reference_path())
        .output()
        .unwrap();
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let csv = dir.path().join("truth.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 751);

    let out = dir.path().join("identify");
    let run = bin()
        .args([
            "identify",
            "--set",
            "excitation.source=\"csv\"",
            "--set",
            &format!("excitation.csv_path=\"{}\"", csv.display()),
            "--set",
            "optimizer.budget=60",
            "--set",
            "variants=[\"switching\"]",
            "-o",
        ])
        .arg(&out)
        .arg(reference_path())
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["dataset"]["samples"], 751);
    let nmse = report["variants"][0]["scores"]["nmse_friction"].as_f64().unwrap();
    assert!(nmse.is_finite() && nmse < 20.0, "{nmse}");
}

/// Key paths of a value, following `properties` (and `$ref`) in the schema.
fn schema_keys(node: &serde_json::Value, root: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    let node = match node.get("$ref").and_then(|r| r.as_str()) {
        Some(r) => root.pointer(r.trim_start_matches('#')).unwrap(),
        None => node,
    };
    if let Some(props) = node.get("properties").and_then(|p| p.as_object()) {
        for (k, v) in props {
            let path = format!("{prefix}{k}");
            out.push(path.clone());
            schema_keys(v, root, &format!("{path}."), out);
        }
    }
}

fn value_keys(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    if let Some(map) = v.as_object() {
        for (k, v) in map {
            let path = format!("{prefix}{k}");
            out.push(path.clone());
            value_keys(v, &format!("{path}."), out);
        }
    }
}

#[test]
fn schema_lists_every_config_key() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.schema.json")).unwrap(),
    )
    .unwrap();
    let mut cfg = ExperimentConfig::from_file(&reference_path(), &[]).unwrap();
    cfg.excitation.harmonic = Some(sgplfm_cli::config::HarmonicConfig {
        amplitude: 1.0,
        frequency_hz: 1.0,
    });
    cfg.excitation.csv_path = Some("x.csv".into());
    let mut want = Vec::new();
    value_keys(&serde_json::to_value(&cfg).unwrap(), "", &mut want);
    let mut have = Vec::new();
    schema_keys(&schema, &schema, "", &mut have);
    want.sort();
    have.sort();
    assert_eq!(want, have);
    assert_eq!(
        schema.pointer("/properties/optimizer/properties/budget/minimum").unwrap(),
        &serde_json::json!(sgplfm::hyper_opt::MIN_BUDGET)
    );
}
