//! Experiment configuration: a single TOML document, optionally patched by
//! `key.path=value` overrides, validated with field paths in every error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgplfm::friction_sim::{uniform_grid, FrictionParams, JonswapParams};
use sgplfm::hyper_opt::{GaussianPrior, HyperPrior};
use sgplfm::ssm_builder::{ExcitationKind, ObservationKind, SystemParams};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// True physical parameters used to simulate the data.
    pub system: SystemParams,
    pub model: ModelConfig,
    pub excitation: ExcitationConfig,
    pub friction: FrictionParams,
    pub signal: SignalConfig,
    pub prior: PriorConfig,
    pub switching: SwitchingConfig,
    pub variants: Vec<Variant>,
    pub seeds: Seeds,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Parameters assumed by the identification model (guesses).
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    #[serde(default = "default_observation")]
    pub observation: ObservationKind,
    #[serde(default)]
    pub correct_parameters: bool,
    #[serde(default)]
    pub correction_mode: CorrectionMode,
}

fn default_observation() -> ObservationKind {
    ObservationKind::Displacement
}

impl ModelConfig {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            mass: self.mass,
            damping: self.damping,
            stiffness: self.stiffness,
        }
    }
}

/// After correcting the parameters: infer again (`reinfer`) or transform the
/// latent force (`transform`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    #[default]
    Reinfer,
    Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub kind: ExcitationKind,
    pub source: InputSource,
    #[serde(default)]
    pub jonswap: Option<JonswapConfig>,
    #[serde(default)]
    pub harmonic: Option<HarmonicConfig>,
    /// Trajectory CSV (as written by `simulate`) when `source = "csv"`.
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    /// Base motion only: add measurement noise to the base displacement
    /// and recover `u`, `u̇` with the kinematic smoother.
    #[serde(default)]
    pub smooth_base_input: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSource {
    Jonswap,
    Harmonic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JonswapConfig {
    pub significant_height: f64,
    pub peak_period: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub gamma: f64,
    pub omega_min: f64,
    pub omega_step: f64,
    pub omega_max: f64,
    pub amplitude_scale: f64,
}

impl JonswapConfig {
    pub fn params(&self, seed: u64) -> JonswapParams {
        JonswapParams {
            significant_height: self.significant_height,
            peak_period: self.peak_period,
            sigma_low: self.sigma_low,
            sigma_high: self.sigma_high,
            gamma: self.gamma,
            frequencies: uniform_grid(self.omega_min, self.omega_step, self.omega_max),
            amplitude_scale: self.amplitude_scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicConfig {
    /// N for direct forcing, m for base motion.
    pub amplitude: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub t_f: f64,
    pub f_s: f64,
    /// dB; `inf` for noise-free data.
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub signal_variance: GaussianPrior,
    pub lengthscale: GaussianPrior,
    pub noise_variance: GaussianPrior,
    /// SNR at which `noise_variance` applies; at other SNRs its mean and
    /// standard deviation are rescaled with the expected noise power.
    #[serde(default)]
    pub noise_reference_snr_db: Option<f64>,
}

/// SNR standing in for noise-free data when rescaling the noise prior.
pub const NOISE_FREE_SNR_DB: f64 = 200.0;

impl PriorConfig {
    pub fn effective(&self, snr_db: f64) -> HyperPrior {
        let mut noise = self.noise_variance;
        if let Some(reference) = self.noise_reference_snr_db {
            let snr = if snr_db.is_finite() { snr_db } else { NOISE_FREE_SNR_DB };
            let factor = 10f64.powf((reference - snr) / 10.0);
            noise = GaussianPrior {
                mean: noise.mean * factor,
                variance: noise.variance * factor * factor,
            };
        }
        HyperPrior {
            signal_variance: self.signal_variance,
            lengthscale: self.lengthscale,
            noise_variance: noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    pub persistence: f64,
    pub p0: f64,
    pub filter_components: usize,
    pub smoother_components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Single latent force model.
    Standard,
    /// Sliding, sticking and resetting regimes.
    Switching,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Switching => "switching",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub input: u64,
    pub noise: u64,
    pub optimizer: u64,
    /// Input seed of the held-out forward-prediction experiment.
    pub validation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

fn field(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: path.to_string(),
        message: msg.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be a positive finite number, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applies overrides and validates. Relative CSV paths
    /// are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| field("<document>", e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| field("<document>", e.to_string()))?;
        if let (Some(base), Some(p)) = (base_dir, cfg.excitation.csv_path.as_ref()) {
            if p.is_relative() {
                cfg.excitation.csv_path = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, overrides, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        positive("system.mass", self.system.mass)?;
        positive("system.stiffness", self.system.stiffness)?;
        if !(self.system.damping >= 0.0) {
            return Err(field("system.damping", "must be >= 0"));
        }
        positive("model.mass", self.model.mass)?;
        positive("model.stiffness", self.model.stiffness)?;
        if !(self.model.damping >= 0.0) {
            return Err(field("model.damping", "must be >= 0"));
        }
        self.friction
            .validate()
            .map_err(|e| field("friction", e.to_string()))?;
        positive("signal.t_f", self.signal.t_f)?;
        positive("signal.f_s", self.signal.f_s)?;
        if self.signal.snr_db.is_nan() || self.signal.snr_db == f64::NEG_INFINITY {
            return Err(field("signal.snr_db", "must be a number or inf"));
        }
        for (name, p) in [
            ("prior.signal_variance", self.prior.signal_variance),
            ("prior.lengthscale", self.prior.lengthscale),
            ("prior.noise_variance", self.prior.noise_variance),
        ] {
            p.validate(name).map_err(|e| field(name, e.to_string()))?;
        }
        if let Some(r) = self.prior.noise_reference_snr_db {
            if !r.is_finite() {
                return Err(field("prior.noise_reference_snr_db", "must be finite"));
            }
        }
        let sw = &self.switching;
        if !(sw.persistence > 0.0 && sw.persistence < 1.0) {
            return Err(field("switching.persistence", "must lie in (0, 1)"));
        }
        positive("switching.p0", sw.p0)?;
        if sw.filter_components == 0 {
            return Err(field("switching.filter_components", "must be >= 1"));
        }
        if sw.smoother_components == 0 || sw.smoother_components > sw.filter_components {
            return Err(field(
                "switching.smoother_components",
                "must lie in [1, switching.filter_components]",
            ));
        }
        if self.variants.is_empty() {
            return Err(field("variants", "at least one variant is required"));
        }
        if self.optimizer.budget < sgplfm::hyper_opt::MIN_BUDGET {
            return Err(field(
                "optimizer.budget",
                format!("must be >= {}", sgplfm::hyper_opt::MIN_BUDGET),
            ));
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(field("output.directory", "must not be empty"));
        }
        let ex = &self.excitation;
        match ex.source {
            InputSource::Jonswap => {
                let j = ex
                    .jonswap
                    .ok_or_else(|| field("excitation.jonswap", "required when source = \"jonswap\""))?;
                j.params(0)
                    .validate()
                    .map_err(|e| field("excitation.jonswap", e.to_string()))?;
                positive("excitation.jonswap.omega_step", j.omega_step)?;
            }
            InputSource::Harmonic => {
                let h = ex
                    .harmonic
                    .ok_or_else(|| field("excitation.harmonic", "required when source = \"harmonic\""))?;
                positive("excitation.harmonic.frequency_hz", h.frequency_hz)?;
                if !h.amplitude.is_finite() {
                    return Err(field("excitation.harmonic.amplitude", "must be finite"));
                }
            }
            InputSource::Csv => {
                let p = ex
                    .csv_path
                    .as_ref()
                    .ok_or_else(|| field("excitation.csv_path", "required when source = \"csv\""))?;
                if !p.is_file() {
                    return Err(field("excitation.csv_path", format!("file {} does not exist", p.display())));
                }
            }
        }
        if ex.smooth_base_input && ex.kind != ExcitationKind::BaseMotion {
            return Err(field("excitation.smooth_base_input", "only applies to base-motion excitation"));
        }
        Ok(())
    }
}

/// Applies `a.b.c=value`; the value is parsed as a TOML value, falling back
/// to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| field(spec, "override must look like key.path=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(field(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| field(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
