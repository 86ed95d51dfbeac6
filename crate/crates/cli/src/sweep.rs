//! Repeated identification over one varying signal setting.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Variant};
use crate::error::{CliError, Result};
use crate::pipeline::{prepare, run_prepared, RunSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    TF,
    FS,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(SweepAxis::Snr),
            "t_f" | "tf" => Ok(SweepAxis::TF),
            "f_s" | "fs" => Ok(SweepAxis::FS),
            _ => Err(CliError::Config {
                field: "axis".into(),
                message: format!("unknown sweep axis `{s}` (expected snr, t_f or f_s)"),
            }),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Snr => "snr",
            SweepAxis::TF => "t_f",
            SweepAxis::FS => "f_s",
        })
    }
}

/// Parses a sweep value; `inf` is accepted for the SNR axis.
pub fn parse_value(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "∞" | "Inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| CliError::Config {
            field: "values".into(),
            message: format!("`{t}` is not a number"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub variant: Variant,
    /// Nonlinear-force NMSE, %.
    pub nmse_friction: f64,
    /// Displacement forward-prediction NMSE, %; absent when no law could be fitted.
    pub prediction_nmse: Option<f64>,
    /// Regime-identification error, %.
    pub regime_error: f64,
    /// Mean relative parameter error, %.
    pub parameter_error: f64,
    pub detected_stops: usize,
    pub true_stops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn check_value(axis: SweepAxis, v: f64) -> Result<()> {
    let ok = match axis {
        SweepAxis::Snr => !v.is_nan() && v > 0.0,
        SweepAxis::TF | SweepAxis::FS => v.is_finite() && v > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Config {
            field: "values".into(),
            message: format!("invalid {axis} value {v}"),
        })
    }
}

/// One identification per value. Data seeds are shared by every point; the
/// optimizer seed is offset by the point index.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(CliError::Config {
            field: "values".into(),
            message: "at least one value is required".into(),
        });
    }
    for v in values {
        check_value(axis, *v)?;
    }
    let t_max = match axis {
        SweepAxis::TF => values.iter().cloned().fold(0.0, f64::max),
        _ => cfg.signal.t_f,
    };
    let prepared = prepare(cfg, t_max)?;
    let base = RunSettings::from_config(cfg);
    let rows = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut s = base;
            s.optimizer_seed = base.optimizer_seed.wrapping_add(i as u64);
            match axis {
                SweepAxis::Snr => s.snr_db = *v,
                SweepAxis::TF => s.t_f = *v,
                SweepAxis::FS => s.f_s = *v,
            }
            let out = run_prepared(cfg, &prepared, s)?;
            Ok(out
                .report
                .variants
                .iter()
                .map(|r| SweepRow {
                    value: *v,
                    variant: r.variant,
                    nmse_friction: r.scores.nmse_friction,
                    prediction_nmse: r.prediction_nmse,
                    regime_error: r.regime_error,
                    parameter_error: r.parameter_error,
                    detected_stops: r.detected_stops,
                    true_stops: out.report.dataset.true_stops,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis,
        rows: rows.into_iter().flatten().collect(),
    })
}

/// CSV rendering of a sweep table.
pub fn write_sweep_csv(table: &SweepTable, path: &std::path::Path) -> Result<()> {
    let err = |e: csv::Error| crate::error::io_err(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        table.axis.to_string().as_str(),
        "variant",
        "nmse_friction_pct",
        "prediction_nmse_pct",
        "regime_error_pct",
        "parameter_error_pct",
        "detected_stops",
        "true_stops",
    ])
    .map_err(err)?;
    for r in &table.rows {
        w.write_record([
            format!("{}", r.value),
            r.variant.as_str().to_string(),
            format!("{:.10e}", r.nmse_friction),
            r.prediction_nmse.map(|v| format!("{v:.10e}")).unwrap_or_default(),
            format!("{:.10e}", r.regime_error),
            format!("{:.10e}", r.parameter_error),
            r.detected_stops.to_string(),
            r.true_stops.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| crate::error::io_err(path, e))
}
