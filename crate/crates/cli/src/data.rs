//! Dataset generation: input construction, ground-truth simulation,
//! resampling, measurement noise and base-input recovery.

use std::sync::Arc;

use nalgebra::DVector;
use sgplfm::friction_sim::{
    add_noise_snr, jonswap_multisine, read_trajectory_csv, resample_uniform, simulate_stick_slip, InputSignal,
    MotionRegime, Multisine, SampledSignal, Trajectory,
};
use sgplfm::post_id::{smooth_base_input, BaseInputEstimate};
use sgplfm::ssm_builder::{ExcitationKind, ObservationKind};

use crate::config::{ExperimentConfig, InputSource};
use crate::error::{io_err, Context, Result};

/// Builds the known input for a given seed.
pub fn build_input(cfg: &ExperimentConfig, seed: u64) -> Result<Arc<dyn InputSignal>> {
    let ex = &cfg.excitation;
    Ok(match ex.source {
        InputSource::Jonswap => {
            let j = ex.jonswap.expect("validated");
            Arc::new(jonswap_multisine(&j.params(seed)).context("excitation.jonswap")?)
        }
        InputSource::Harmonic => {
            let h = ex.harmonic.expect("validated");
            Arc::new(
                Multisine::harmonic(h.amplitude, 2.0 * std::f64::consts::PI * h.frequency_hz, 0.0)
                    .context("excitation.harmonic")?,
            )
        }
        InputSource::Csv => {
            let traj = load_csv(cfg)?;
            let dt = if traj.len() > 1 { traj.time[1] - traj.time[0] } else { 1.0 };
            Arc::new(SampledSignal::new(traj.time[0], dt, traj.u.clone(), Some(traj.udot.clone())).context("excitation.csv_path")?)
        }
    })
}

fn load_csv(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let path = cfg.excitation.csv_path.as_ref().expect("validated");
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let traj = read_trajectory_csv(file).context(format!("excitation.csv_path ({})", path.display()))?;
    if traj.excitation != cfg.excitation.kind {
        return Err(crate::error::CliError::Config {
            field: "excitation.kind".into(),
            message: format!("CSV holds {:?} data", traj.excitation),
        });
    }
    Ok(traj)
}

/// Dense ground truth of the true system from rest up to `t_f`.
pub fn simulate_truth(cfg: &ExperimentConfig, input: &dyn InputSignal, t_f: f64) -> Result<Trajectory> {
    simulate_stick_slip(&cfg.system, &cfg.friction, input, t_f, cfg.excitation.kind).context("simulation")
}

/// Dense truth for the configured input: simulated, or loaded from CSV.
pub fn dense_truth(cfg: &ExperimentConfig, t_f: f64) -> Result<Trajectory> {
    match cfg.excitation.source {
        InputSource::Csv => load_csv(cfg),
        _ => {
            let input = build_input(cfg, cfg.seeds.input)?;
            simulate_truth(cfg, input.as_ref(), t_f)
        }
    }
}

/// Keeps samples with `t ≤ t_f`.
pub fn truncate(traj: &Trajectory, t_f: f64) -> Trajectory {
    let n = traj.time.partition_point(|t| *t <= t_f + 1e-12);
    Trajectory {
        excitation: traj.excitation,
        time: traj.time[..n].to_vec(),
        z: traj.z[..n].to_vec(),
        zdot: traj.zdot[..n].to_vec(),
        zddot: traj.zddot[..n].to_vec(),
        friction: traj.friction[..n].to_vec(),
        u: traj.u[..n].to_vec(),
        udot: traj.udot[..n].to_vec(),
        regime: traj.regime[..n].to_vec(),
    }
}

/// Uniformly sampled truth with noisy measurements and model inputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub truth: Trajectory,
    pub measurements: Vec<f64>,
    pub noise_sd: f64,
    /// `[u]` for direct forcing, `[u, u̇]` for base motion.
    pub inputs: Vec<DVector<f64>>,
    pub base_input: Option<BaseInputEstimate>,
}

impl Dataset {
    pub fn observations(&self) -> Vec<DVector<f64>> {
        self.measurements.iter().map(|y| DVector::from_element(1, *y)).collect()
    }

    pub fn dt(&self) -> f64 {
        self.truth.time[1] - self.truth.time[0]
    }

    pub fn true_stick_count(&self) -> usize {
        self.truth.stick_count()
    }

    pub fn stick_fraction(&self) -> f64 {
        self.truth.regime.iter().filter(|r| **r == MotionRegime::Stick).count() as f64 / self.truth.len() as f64
    }
}

/// Resamples the dense truth at `f_s` over `[0, t_f]` and adds noise at
/// `snr_db` to the measured channel.
pub fn make_dataset(cfg: &ExperimentConfig, dense: &Trajectory, t_f: f64, f_s: f64, snr_db: f64) -> Result<Dataset> {
    let truth = resample_uniform(&truncate(dense, t_f), f_s).context("resampling")?;
    if truth.len() < 3 {
        return Err(crate::error::CliError::Config {
            field: "signal".into(),
            message: "fewer than three samples after resampling".into(),
        });
    }
    let clean = match cfg.model.observation {
        ObservationKind::Displacement => &truth.z,
        ObservationKind::Acceleration => &truth.zddot,
    };
    let (measurements, noise_sd) = add_noise_snr(clean, snr_db, cfg.seeds.noise).context("noise")?;
    let (inputs, base_input) = match cfg.excitation.kind {
        ExcitationKind::DirectForce => (truth.u.iter().map(|u| DVector::from_element(1, *u)).collect(), None),
        ExcitationKind::BaseMotion if cfg.excitation.smooth_base_input => {
            let (raw, _) = add_noise_snr(&truth.u, snr_db, cfg.seeds.noise.wrapping_add(1)).context("base noise")?;
            let est = smooth_base_input(&raw, f_s, None, cfg.seeds.optimizer).context("base input smoothing")?;
            let inputs = est
                .u
                .iter()
                .zip(&est.udot)
                .map(|(u, ud)| DVector::from_vec(vec![*u, *ud]))
                .collect();
            (inputs, Some(est))
        }
        ExcitationKind::BaseMotion => (
            truth
                .u
                .iter()
                .zip(&truth.udot)
                .map(|(u, ud)| DVector::from_vec(vec![*u, *ud]))
                .collect(),
            None,
        ),
    };
    Ok(Dataset {
        truth,
        measurements,
        noise_sd,
        inputs,
        base_input,
    })
}
