//! Report files: JSON summary, metric table and per-step CSV series.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sgplfm::friction_sim::{MotionRegime, Trajectory};
use sgplfm::ssm_builder::RegimeKind;

use crate::error::{io_err, Result};
use crate::pipeline::{ExperimentOutput, VariantOutput};

/// Pretty JSON; field order is fixed by the struct definitions, so equal
/// inputs give byte-identical text.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn f(v: f64) -> String {
    format!("{v:.10e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn kind_name(k: RegimeKind) -> &'static str {
    match k {
        RegimeKind::Sliding => "sliding",
        RegimeKind::Sticking => "sticking",
        RegimeKind::Resetting => "resetting",
    }
}

fn variant_label(v: &VariantOutput) -> String {
    let r = &v.report;
    match r.variant {
        crate::config::Variant::Standard => "standard".into(),
        crate::config::Variant::Switching => format!("switching_i{}_j{}", r.filter_components, r.smoother_components),
    }
}

/// Metric table with one row per variant. NMSE[z] is per ten-thousand,
/// the other scores in percent.
pub fn write_table(out: &ExperimentOutput, path: &Path) -> Result<()> {
    let header = [
        "variant",
        "nmse_z_permyriad",
        "nmse_zdot_pct",
        "nmse_zddot_pct",
        "nmse_friction_pct",
        "nmv_friction_pct",
        "signal_variance_N2",
        "lengthscale_s",
        "noise_variance_m2",
        "regime_error_pct",
        "prediction_nmse_pct",
        "parameter_error_pct",
    ]
    .map(String::from);
    let rows = out.variants.iter().map(|v| {
        let r = &v.report;
        vec![
            variant_label(v),
            f(100.0 * r.scores.nmse_z),
            f(r.scores.nmse_zdot),
            f(r.scores.nmse_zddot),
            f(r.scores.nmse_friction),
            f(r.scores.nmv_friction),
            f(r.hyper.signal_variance),
            f(r.hyper.lengthscale),
            f(r.hyper.noise_variance),
            f(r.regime_error),
            opt(r.prediction_nmse),
            f(r.parameter_error),
        ]
    });
    write_rows(path, &header, rows)
}

fn regime_str(r: MotionRegime) -> String {
    r.as_str().to_string()
}

/// Smoothed states, accelerations, forces and regime probabilities.
pub fn write_steps(truth: &Trajectory, v: &VariantOutput, path: &Path) -> Result<()> {
    let e = &v.estimates;
    let mut header: Vec<String> = [
        "time_s",
        "z_true_m",
        "z_mean_m",
        "z_var_m2",
        "zdot_true_m_per_s",
        "zdot_mean_m_per_s",
        "zdot_var_m2_per_s2",
        "zddot_true_m_per_s2",
        "zddot_mean_m_per_s2",
        "zddot_var_m2_per_s4",
        "friction_true_N",
        "friction_mean_N",
        "friction_var_N2",
        "regime_true",
        "regime_map",
    ]
    .map(String::from)
    .to_vec();
    header.extend(e.kinds.iter().map(|k| format!("p_{}", kind_name(*k))));
    let rows = (0..e.z.len()).map(|t| {
        let mut r = vec![
            f(truth.time[t]),
            f(truth.z[t]),
            f(e.z[t]),
            f(e.z_var[t]),
            f(truth.zdot[t]),
            f(e.zdot[t]),
            f(e.zdot_var[t]),
            f(truth.zddot[t]),
            f(e.zddot[t]),
            f(e.zddot_var[t]),
            f(truth.friction[t]),
            f(e.force[t]),
            f(e.force_var[t]),
            regime_str(truth.regime[t]),
            kind_name(e.kinds[e.map[t]]).to_string(),
        ];
        r.extend(e.probs[t].iter().map(|p| f(*p)));
        r
    });
    write_rows(path, &header, rows)
}

/// Slip-phase force–velocity estimates with ±3σ bounds.
pub fn write_force_velocity(v: &VariantOutput, path: &Path) -> Result<()> {
    let e = &v.estimates;
    let header = [
        "velocity_mean_m_per_s",
        "velocity_sd_m_per_s",
        "force_mean_N",
        "force_lower_3sd_N",
        "force_upper_3sd_N",
    ]
    .map(String::from);
    let rows = (0..e.z.len())
        .filter(|&t| 1.0 - e.stick_prob(t) > 0.5)
        .map(|t| {
            let sd = e.force_var[t].max(0.0).sqrt();
            vec![
                f(e.zdot[t]),
                f(e.zdot_var[t].max(0.0).sqrt()),
                f(e.force[t]),
                f(e.force[t] - 3.0 * sd),
                f(e.force[t] + 3.0 * sd),
            ]
        });
    write_rows(path, &header, rows)
}

/// True and fitted friction laws on a symmetric velocity grid.
pub fn write_friction_curve(out: &ExperimentOutput, v: &VariantOutput, path: &Path) -> Result<()> {
    let vmax = v.estimates.zdot.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-6);
    let truth = out.friction;
    let fitted = v.report.friction_law;
    let n = 401;
    let header = ["velocity_m_per_s", "friction_true_N", "friction_fitted_N"].map(String::from);
    let rows = (0..n).map(|i| {
        let vel = -vmax + 2.0 * vmax * i as f64 / (n - 1) as f64;
        let sign = if vel > 0.0 {
            1.0
        } else if vel < 0.0 {
            -1.0
        } else {
            0.0
        };
        vec![
            f(vel),
            f(sign * truth.magnitude(vel)),
            opt(fitted.map(|l| sign * l.magnitude(vel))),
        ]
    });
    write_rows(path, &header, rows)
}

/// Writes every report file into `dir` and returns the paths written.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let report = dir.join("report.json");
    fs::write(&report, to_json(&out.report)).map_err(|e| io_err(&report, e))?;
    written.push(report);
    let table = dir.join("table.csv");
    write_table(out, &table)?;
    written.push(table);
    for v in &out.variants {
        let label = variant_label(v);
        let steps = dir.join(format!("steps_{label}.csv"));
        write_steps(&out.dataset.truth, v, &steps)?;
        let fv = dir.join(format!("force_velocity_{label}.csv"));
        write_force_velocity(v, &fv)?;
        let curve = dir.join(format!("friction_curve_{label}.csv"));
        write_friction_curve(out, v, &curve)?;
        written.extend([steps, fv, curve]);
    }
    Ok(written)
}
