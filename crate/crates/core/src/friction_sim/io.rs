//! Resampling, noise injection and CSV exchange of trajectories.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sim::{MotionRegime, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::ssm_builder::ExcitationKind;

/// Final time, sampling rate and measurement SNR of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub t_f: f64,
    pub f_s: f64,
    /// dB; `f64::INFINITY` means noise-free.
    pub snr_db: f64,
}

impl SignalSpec {
    pub fn new(t_f: f64, f_s: f64, snr_db: f64) -> Result<Self> {
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(invalid("t_f", format!("must be > 0, got {t_f}")));
        }
        if !(f_s > 0.0 && f_s.is_finite()) {
            return Err(invalid("f_s", format!("must be > 0, got {f_s}")));
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(invalid("snr_db", "must be a number or +inf"));
        }
        Ok(SignalSpec { t_f, f_s, snr_db })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn sample_count(&self) -> usize {
        (self.t_f * self.f_s + 1e-9).floor() as usize + 1
    }
}

/// Linear interpolation of every channel onto `0, Δt, 2Δt, … ≤ t_end`;
/// regime labels are taken from the nearest sample at or before each time.
pub fn resample_uniform(traj: &Trajectory, f_s: f64) -> Result<Trajectory> {
    if !(f_s > 0.0) {
        return Err(invalid("f_s", "must be > 0"));
    }
    if traj.is_empty() {
        return Err(invalid("trajectory", "is empty"));
    }
    let dt = 1.0 / f_s;
    let t_end = *traj.time.last().expect("non-empty");
    let t_start = traj.time[0];
    let n = ((t_end - t_start) * f_s + 1e-9).floor() as usize + 1;
    let mut out = Trajectory::empty(traj.excitation);
    let mut j = 0usize;
    let last = traj.len() - 1;
    for i in 0..n {
        let t = t_start + i as f64 * dt;
        while j + 1 < last && traj.time[j + 1] <= t {
            j += 1;
        }
        let (j0, j1) = if last == 0 { (0, 0) } else { (j, j + 1) };
        let (t0, t1) = (traj.time[j0], traj.time[j1]);
        let w = if j1 == j0 || t1 == t0 {
            0.0
        } else {
            ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)
        };
        let lerp = |v: &[f64]| if w == 0.0 { v[j0] } else if w == 1.0 { v[j1] } else { v[j0] + w * (v[j1] - v[j0]) };
        let label = if w >= 1.0 { traj.regime[j1] } else { traj.regime[j0] };
        out.time.push(t);
        out.z.push(lerp(&traj.z));
        out.zdot.push(lerp(&traj.zdot));
        out.zddot.push(lerp(&traj.zddot));
        out.friction.push(lerp(&traj.friction));
        out.u.push(lerp(&traj.u));
        out.udot.push(lerp(&traj.udot));
        out.regime.push(label);
    }
    Ok(out)
}

/// Mean square of a signal.
pub fn signal_power(signal: &[f64]) -> f64 {
    signal.iter().map(|v| v * v).sum::<f64>() / signal.len().max(1) as f64
}

/// Adds white Gaussian noise of power `P_signal / 10^(snr/10)`, where
/// `P_signal` is the mean square. Returns the noisy signal and the noise
/// standard deviation; `snr = ∞` returns the input unchanged and σ = 0.
pub fn add_noise_snr(signal: &[f64], snr_db: f64, seed: u64) -> Result<(Vec<f64>, f64)> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(invalid("snr_db", "must be a number or +inf"));
    }
    if snr_db == f64::INFINITY {
        return Ok((signal.to_vec(), 0.0));
    }
    let sigma = (signal_power(signal) / 10f64.powf(snr_db / 10.0)).sqrt();
    if sigma == 0.0 {
        return Ok((signal.to_vec(), 0.0));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid("snr_db", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((signal.iter().map(|v| v + normal.sample(&mut rng)).collect(), sigma))
}

fn input_units(excitation: ExcitationKind) -> (&'static str, &'static str) {
    match excitation {
        ExcitationKind::DirectForce => ("u_N", "udot_N_per_s"),
        ExcitationKind::BaseMotion => ("u_m", "udot_m_per_s"),
    }
}

const FIXED_HEADER: [&str; 5] = ["time_s", "z_m", "zdot_m_per_s", "zddot_m_per_s2", "friction_N"];

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let (u, ud) = input_units(traj.excitation);
    let mut header: Vec<&str> = FIXED_HEADER.to_vec();
    header.extend([u, ud, "regime"]);
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..traj.len() {
        w.write_record([
            format!("{:e}", traj.time[i]),
            format!("{:e}", traj.z[i]),
            format!("{:e}", traj.zdot[i]),
            format!("{:e}", traj.zddot[i]),
            format!("{:e}", traj.friction[i]),
            format!("{:e}", traj.u[i]),
            format!("{:e}", traj.udot[i]),
            traj.regime[i].as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.len() != 8 || header[..5] != FIXED_HEADER {
        return Err(Error::Csv(format!("unexpected trajectory header {header:?}")));
    }
    let excitation = match (header[5].as_str(), header[6].as_str()) {
        ("u_N", "udot_N_per_s") => ExcitationKind::DirectForce,
        ("u_m", "udot_m_per_s") => ExcitationKind::BaseMotion,
        other => return Err(Error::Csv(format!("unknown input columns {other:?}"))),
    };
    let mut traj = Trajectory::empty(excitation);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Csv(format!("row {}, column {}: {e}", line + 2, header[i])))
        };
        let regime = match rec[7].trim() {
            "slip" => MotionRegime::Slip,
            "stick" => MotionRegime::Stick,
            other => return Err(Error::Csv(format!("row {}: unknown regime {other:?}", line + 2))),
        };
        let t = num(0)?;
        if traj.time.last().is_some_and(|&p| t <= p) {
            return Err(Error::Csv(format!("row {}: time is not strictly increasing", line + 2)));
        }
        traj.time.push(t);
        traj.z.push(num(1)?);
        traj.zdot.push(num(2)?);
        traj.zddot.push(num(3)?);
        traj.friction.push(num(4)?);
        traj.u.push(num(5)?);
        traj.udot.push(num(6)?);
        traj.regime.push(regime);
    }
    Ok(traj)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}
