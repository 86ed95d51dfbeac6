//! Identification pipeline: hyperparameter search, switching inference,
//! post-processing and scoring against the ground truth.

use std::sync::Arc;

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use sgplfm::friction_sim::{resample_uniform, FrictionParams, InputSignal, MotionRegime, Trajectory};
use sgplfm::gp_ssm::KernelSpec;
use sgplfm::hyper_opt::{optimize, HyperContext, Hyperparameters};
use sgplfm::post_id::{
    correct_parameters, fit_friction_law, fit_linear_residual, forward_predict, nmse, nmv, recover_friction,
    static_friction_from_series, variance, ForceVelocityEstimates, LinearResidualFit, ParameterCorrection,
    ResidualSamples, StaticFrictionEstimate,
};
use sgplfm::ssm_builder::{assemble_regimes, ExcitationKind, RegimeKind, RegimeSpec, SystemParams};
use sgplfm::switching::{infer, markov_transition_matrix, regime_index, GaussianMixtureBelief, InferenceConfig};

use crate::config::{CorrectionMode, ExperimentConfig, InputSource, Variant};
use crate::data::{build_input, dense_truth, make_dataset, simulate_truth, truncate, Dataset};
use crate::error::{Context, Result};

/// Signal settings of one run; the sweep overrides them per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSettings {
    pub t_f: f64,
    pub f_s: f64,
    pub snr_db: f64,
    pub optimizer_seed: u64,
}

impl RunSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        RunSettings {
            t_f: cfg.signal.t_f,
            f_s: cfg.signal.f_s,
            snr_db: cfg.signal.snr_db,
            optimizer_seed: cfg.seeds.optimizer,
        }
    }
}

/// Dense trajectories shared by every run of an experiment.
pub struct Prepared {
    pub dense: Trajectory,
    pub validation_input: Arc<dyn InputSignal>,
    pub validation_truth: Trajectory,
}

/// Simulates (or loads) the estimation and validation trajectories up to `t_f`.
pub fn prepare(cfg: &ExperimentConfig, t_f: f64) -> Result<Prepared> {
    let dense = dense_truth(cfg, t_f)?;
    let (validation_input, validation_truth) = match cfg.excitation.source {
        // Recorded data has no held-out experiment; predict the recording itself.
        InputSource::Csv => (build_input(cfg, cfg.seeds.validation)?, dense.clone()),
        _ => {
            let input = build_input(cfg, cfg.seeds.validation)?;
            let truth = simulate_truth(cfg, input.as_ref(), t_f)?;
            (input, truth)
        }
    };
    Ok(Prepared {
        dense,
        validation_input,
        validation_truth,
    })
}

/// Posterior summaries per time step.
#[derive(Debug, Clone, Default)]
pub struct Estimates {
    pub z: Vec<f64>,
    pub z_var: Vec<f64>,
    pub zdot: Vec<f64>,
    pub zdot_var: Vec<f64>,
    pub zddot: Vec<f64>,
    pub zddot_var: Vec<f64>,
    pub force: Vec<f64>,
    pub force_var: Vec<f64>,
    /// Smoothed regime probabilities, one row per step.
    pub probs: Vec<Vec<f64>>,
    pub map: Vec<usize>,
    pub kinds: Vec<RegimeKind>,
}

impl Estimates {
    fn from_beliefs(
        beliefs: &[GaussianMixtureBelief],
        map: Vec<usize>,
        kinds: Vec<RegimeKind>,
        params: &SystemParams,
        excitation: ExcitationKind,
        inputs: &[DVector<f64>],
    ) -> Self {
        let mut e = Estimates {
            map,
            kinds,
            ..Default::default()
        };
        let m = params.mass;
        let g = [-params.stiffness / m, -params.damping / m, -1.0 / m];
        for (b, u) in beliefs.iter().zip(inputs) {
            let mo = b.moments();
            let (mean, cov) = (&mo.mean, &mo.cov);
            e.z.push(mean[0]);
            e.z_var.push(cov[(0, 0)]);
            e.zdot.push(mean[1]);
            e.zdot_var.push(cov[(1, 1)]);
            e.force.push(mean[2]);
            e.force_var.push(cov[(2, 2)]);
            let drive = excitation.effective_force(params, u.as_slice()) / m;
            e.zddot.push(drive + g[0] * mean[0] + g[1] * mean[1] + g[2] * mean[2]);
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += g[i] * cov[(i, j)] * g[j];
                }
            }
            e.zddot_var.push(v.max(0.0));
            e.probs.push(b.regime_probs());
        }
        e
    }

    fn stick_index(&self) -> Option<usize> {
        self.kinds.iter().position(|k| *k == RegimeKind::Sticking)
    }

    pub fn stick_prob(&self, t: usize) -> f64 {
        self.stick_index().map_or(0.0, |s| self.probs[t][s])
    }

    /// MAP label is sticking; resetting counts as slip.
    pub fn is_stick(&self, t: usize) -> bool {
        self.stick_index() == Some(self.map[t])
    }

    fn slip_samples(&self) -> ForceVelocityEstimates {
        let idx: Vec<usize> = (0..self.z.len()).filter(|&t| 1.0 - self.stick_prob(t) > 0.5).collect();
        ForceVelocityEstimates {
            velocity_mean: idx.iter().map(|&t| self.zdot[t]).collect(),
            velocity_var: idx.iter().map(|&t| self.zdot_var[t]).collect(),
            force_mean: idx.iter().map(|&t| self.force[t]).collect(),
            force_var: idx.iter().map(|&t| self.force_var[t]).collect(),
            time_index: idx,
        }
    }

    fn detected_stops(&self) -> usize {
        (0..self.map.len())
            .filter(|&t| self.is_stick(t) && (t == 0 || !self.is_stick(t - 1)))
            .count()
    }
}

/// Table-style error scores, all in %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub nmse_z: f64,
    pub nmse_zdot: f64,
    pub nmse_zddot: f64,
    pub nmse_friction: f64,
    pub nmv_friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionReport {
    pub initial_hyper: Hyperparameters,
    pub fit: LinearResidualFit,
    pub correction: ParameterCorrection,
    pub mode: CorrectionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub filter_components: usize,
    pub smoother_components: usize,
    pub params: SystemParams,
    pub hyper: Hyperparameters,
    pub log_posterior: f64,
    pub evaluations: usize,
    pub scores: Scores,
    /// Fraction of steps whose MAP regime differs from the true motion regime, in %.
    pub regime_error: f64,
    pub detected_stops: usize,
    pub static_friction: Option<StaticFrictionEstimate>,
    pub friction_law: Option<FrictionParams>,
    /// NMSE of the fitted friction magnitude against the true law over the
    /// observed speed range, in %.
    pub friction_law_nmse: Option<f64>,
    /// Forward-prediction displacement NMSE on the validation input, in %.
    pub prediction_nmse: Option<f64>,
    /// Mean relative error of the identifiable physical parameters, in %.
    pub parameter_error: f64,
    pub correction: Option<CorrectionReport>,
    pub notes: Vec<String>,
}

/// Report plus the per-step series behind it.
#[derive(Debug, Clone)]
pub struct VariantOutput {
    pub report: VariantReport,
    pub estimates: Estimates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub dt: f64,
    pub noise_sd: f64,
    pub true_stops: usize,
    /// Fraction of sticking samples in %.
    pub stick_fraction: f64,
    pub true_static_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub settings: RunSettings,
    pub dataset: DatasetSummary,
    pub variants: Vec<VariantReport>,
    /// Echo of the configuration (TOML keeps non-finite SNR values intact).
    pub config: String,
}

pub struct ExperimentOutput {
    pub report: Report,
    /// True friction law of the data-generating system.
    pub friction: FrictionParams,
    pub dataset: Dataset,
    pub variants: Vec<VariantOutput>,
}

struct Identified {
    hyper: Hyperparameters,
    log_posterior: f64,
    evaluations: usize,
    estimates: Estimates,
}

fn inference_config(cfg: &ExperimentConfig, variant: Variant) -> Result<InferenceConfig> {
    match variant {
        Variant::Standard => InferenceConfig::new(1, 1),
        Variant::Switching => InferenceConfig::new(cfg.switching.filter_components, cfg.switching.smoother_components),
    }
    .context("switching")
}

fn identify(
    cfg: &ExperimentConfig,
    data: &Dataset,
    params: SystemParams,
    variant: Variant,
    settings: &RunSettings,
) -> Result<Identified> {
    let ctx_name = variant.as_str();
    let inference = inference_config(cfg, variant)?;
    let prior = cfg.prior.effective(settings.snr_db);
    let switching = variant == Variant::Switching;
    let mut spec = RegimeSpec {
        params,
        excitation: cfg.excitation.kind,
        kernel: KernelSpec::exponential(prior.signal_variance.mean, prior.lengthscale.mean).context("prior")?,
        dt: data.dt(),
        observation: cfg.model.observation,
        noise_variance: prior.noise_variance.mean,
        p0: cfg.switching.p0,
        stick_slip: switching,
        reset: switching,
    };
    let observations = data.observations();
    let ctx = HyperContext {
        spec: spec.clone(),
        persistence: cfg.switching.persistence,
        inference,
        inputs: &data.inputs,
        observations: &observations,
        prior_mean: None,
    };
    let est = optimize(&prior, &ctx, cfg.optimizer.budget, settings.optimizer_seed)
        .context(format!("{ctx_name}: hyperparameter optimization"))?;
    info!(
        "{ctx_name}: sigma_f^2 = {:.4e}, l = {:.4e}, sigma_n^2 = {:.4e}, log posterior {:.3} ({} evaluations)",
        est.hyper.signal_variance, est.hyper.lengthscale, est.hyper.noise_variance, est.log_posterior, est.evaluations
    );
    spec.kernel = KernelSpec::exponential(est.hyper.signal_variance, est.hyper.lengthscale).context("kernel")?;
    spec.noise_variance = est.hyper.noise_variance;
    let set = assemble_regimes(&spec).context(format!("{ctx_name}: model assembly"))?;
    let switch = markov_transition_matrix(set.len(), cfg.switching.persistence).context("switching.persistence")?;
    let (_, smoothed) =
        infer(&set, &switch, &data.inputs, &observations, &inference).context(format!("{ctx_name}: inference"))?;
    debug_assert!(regime_index(&set, RegimeKind::Sliding).is_some());
    let estimates = Estimates::from_beliefs(
        &smoothed.beliefs,
        smoothed.regimes.map.clone(),
        set.kinds(),
        &params,
        cfg.excitation.kind,
        &data.inputs,
    );
    Ok(Identified {
        hyper: est.hyper,
        log_posterior: est.log_posterior,
        evaluations: est.evaluations,
        estimates,
    })
}

fn input_columns(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let u = data.inputs.iter().map(|v| v[0]).collect();
    let udot = data.inputs.iter().map(|v| if v.len() > 1 { v[1] } else { 0.0 }).collect();
    (u, udot)
}

fn fit_residual(est: &Estimates, data: &Dataset, excitation: ExcitationKind) -> sgplfm::Result<LinearResidualFit> {
    let (u, udot) = input_columns(data);
    let fv = est.slip_samples();
    let pick = |s: &[f64]| fv.time_index.iter().map(|&t| s[t]).collect::<Vec<f64>>();
    let (force, z, zdot, u, udot) = (pick(&est.force), pick(&est.z), pick(&est.zdot), pick(&u), pick(&udot));
    fit_linear_residual(
        &ResidualSamples {
            force: &force,
            z: &z,
            zdot: &zdot,
            u: &u,
            udot: &udot,
        },
        excitation,
    )
}

/// Removes the fitted linear part from the latent force in place.
fn transform_force(est: &mut Estimates, data: &Dataset, fit: &LinearResidualFit) -> sgplfm::Result<()> {
    let (u, udot) = input_columns(data);
    match fit.excitation {
        ExcitationKind::DirectForce => {
            let (mean, var) = recover_friction(
                &ResidualSamples {
                    force: &est.force,
                    z: &est.z,
                    zdot: &est.zdot,
                    u: &u,
                    udot: &udot,
                },
                &est.force_var,
                fit,
            )?;
            est.force = mean;
            est.force_var = var;
        }
        ExcitationKind::BaseMotion => {
            for t in 0..est.force.len() {
                est.force[t] -= fit.a(1) * (est.z[t] - u[t]) + fit.a(2) * (est.zdot[t] - udot[t]);
            }
        }
    }
    Ok(())
}

fn parameter_error(cfg: &ExperimentConfig, p: &SystemParams) -> f64 {
    let t = &cfg.system;
    let mut errs = vec![
        ((p.damping - t.damping) / t.damping).abs(),
        ((p.stiffness - t.stiffness) / t.stiffness).abs(),
    ];
    if cfg.excitation.kind == ExcitationKind::DirectForce {
        errs.push(((p.mass - t.mass) / t.mass).abs());
    }
    100.0 * errs.iter().sum::<f64>() / errs.len() as f64
}

fn law_curve_nmse(truth: &FrictionParams, fitted: &FrictionParams, speeds: &[f64]) -> sgplfm::Result<f64> {
    let lo = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = speeds.iter().cloned().fold(0.0, f64::max);
    let n = 200;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let t: Vec<f64> = grid.iter().map(|v| truth.magnitude(*v)).collect();
    let f: Vec<f64> = grid.iter().map(|v| fitted.magnitude(*v)).collect();
    nmse(&t, &f)
}

fn prediction_nmse(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    params: &SystemParams,
    law: &FrictionParams,
    settings: &RunSettings,
) -> sgplfm::Result<f64> {
    let predicted = forward_predict(
        params,
        law,
        prepared.validation_input.as_ref(),
        settings.t_f,
        cfg.excitation.kind,
    )?;
    let p = resample_uniform(&predicted, settings.f_s)?;
    let t = resample_uniform(&truncate(&prepared.validation_truth, settings.t_f), settings.f_s)?;
    let n = p.len().min(t.len());
    nmse(&t.z[..n], &p.z[..n])
}

fn score(data: &Dataset, est: &Estimates) -> sgplfm::Result<Scores> {
    let tr = &data.truth;
    Ok(Scores {
        nmse_z: nmse(&tr.z, &est.z)?,
        nmse_zdot: nmse(&tr.zdot, &est.zdot)?,
        nmse_zddot: nmse(&tr.zddot, &est.zddot)?,
        nmse_friction: nmse(&tr.friction, &est.force)?,
        nmv_friction: nmv(variance(&tr.friction), &est.force_var)?,
    })
}

fn run_variant(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    data: &Dataset,
    variant: Variant,
    settings: &RunSettings,
) -> Result<VariantOutput> {
    let name = variant.as_str();
    let guesses = cfg.model.params();
    let mut notes = Vec::new();
    let first = identify(cfg, data, guesses, variant, settings)?;
    let (final_run, params, correction) = if cfg.model.correct_parameters {
        let fit = fit_residual(&first.estimates, data, cfg.excitation.kind).context(format!("{name}: residual fit"))?;
        let corr = correct_parameters(&fit, &guesses).context(format!("{name}: parameter correction"))?;
        info!(
            "{name}: corrected m = {:.4}, c = {:.4}, k = {:.3}",
            corr.corrected.mass, corr.corrected.damping, corr.corrected.stiffness
        );
        let report = CorrectionReport {
            initial_hyper: first.hyper,
            fit: fit.clone(),
            correction: corr,
            mode: cfg.model.correction_mode,
        };
        match cfg.model.correction_mode {
            CorrectionMode::Reinfer => {
                let second = identify(cfg, data, corr.corrected, variant, settings)?;
                (second, corr.corrected, Some(report))
            }
            CorrectionMode::Transform => {
                let mut run = first;
                transform_force(&mut run.estimates, data, &fit).context(format!("{name}: friction recovery"))?;
                (run, corr.corrected, Some(report))
            }
        }
    } else {
        (first, guesses, None)
    };
    let est = final_run.estimates;
    let scores = score(data, &est).context(format!("{name}: scoring"))?;
    let mismatches = (0..est.map.len())
        .filter(|&t| est.is_stick(t) != (data.truth.regime[t] == MotionRegime::Stick))
        .count();
    let regime_error = 100.0 * mismatches as f64 / est.map.len() as f64;

    let static_friction = match est.stick_index() {
        Some(s) => match static_friction_from_series(&est.force, &est.map, s) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("{name}: {e}");
                notes.push(e.to_string());
                None
            }
        },
        None => None,
    };
    let fv = est.slip_samples();
    let friction_law = match fit_friction_law(&fv, cfg.friction.v_star, cfg.friction.epsilon, static_friction.as_ref()) {
        Ok(l) => Some(l),
        Err(e) => {
            warn!("{name}: friction-law fit failed: {e}");
            notes.push(format!("friction-law fit: {e}"));
            None
        }
    };
    let friction_law_nmse = friction_law.as_ref().and_then(|l| {
        let speeds: Vec<f64> = fv.velocity_mean.iter().map(|v| v.abs()).collect();
        law_curve_nmse(&cfg.friction, l, &speeds).ok()
    });
    let prediction_nmse = friction_law
        .as_ref()
        .and_then(|l| match prediction_nmse(cfg, prepared, &params, l, settings) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("{name}: forward prediction failed: {e}");
                notes.push(format!("forward prediction: {e}"));
                None
            }
        });
    let inference = inference_config(cfg, variant)?;
    Ok(VariantOutput {
        report: VariantReport {
            variant,
            filter_components: inference.filter_components,
            smoother_components: inference.smoother_components,
            params,
            hyper: final_run.hyper,
            log_posterior: final_run.log_posterior,
            evaluations: final_run.evaluations,
            scores,
            regime_error,
            detected_stops: est.detected_stops(),
            static_friction,
            friction_law,
            friction_law_nmse,
            prediction_nmse,
            parameter_error: parameter_error(cfg, &params),
            correction,
            notes,
        },
        estimates: est,
    })
}

/// One full identification run on prepared trajectories.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared, settings: RunSettings) -> Result<ExperimentOutput> {
    let data = make_dataset(cfg, &prepared.dense, settings.t_f, settings.f_s, settings.snr_db)?;
    info!(
        "{}: {} samples, {} true stops, noise sd {:.3e}",
        cfg.name,
        data.truth.len(),
        data.true_stick_count(),
        data.noise_sd
    );
    let variants = cfg
        .variants
        .par_iter()
        .map(|v| run_variant(cfg, prepared, &data, *v, &settings))
        .collect::<Result<Vec<_>>>()?;
    let report = Report {
        name: cfg.name.clone(),
        settings,
        dataset: DatasetSummary {
            samples: data.truth.len(),
            dt: data.dt(),
            noise_sd: data.noise_sd,
            true_stops: data.true_stick_count(),
            stick_fraction: 100.0 * data.stick_fraction(),
            true_static_force: cfg.friction.static_force(),
        },
        variants: variants.iter().map(|v| v.report.clone()).collect(),
        config: toml::to_string(cfg).unwrap_or_default(),
    };
    Ok(ExperimentOutput {
        report,
        friction: cfg.friction,
        dataset: data,
        variants,
    })
}

/// Generates data, identifies every configured variant and scores it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let prepared = prepare(cfg, cfg.signal.t_f)?;
    run_prepared(cfg, &prepared, RunSettings::from_config(cfg))
}
