//! Known input signals: random-phase multisines (JONSWAP-shaped or
//! harmonic) and piecewise-linear sampled signals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A deterministic input signal with a known time derivative.
pub trait InputSignal: Send + Sync {
    fn value_and_derivative(&self, t: f64) -> (f64, f64);

    fn value(&self, t: f64) -> f64 {
        self.value_and_derivative(t).0
    }

    fn derivative(&self, t: f64) -> f64 {
        self.value_and_derivative(t).1
    }
}

/// `u(t) = Σ A_k cos(ω_k t + φ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multisine {
    amplitudes: Vec<f64>,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    /// `(ω_0, Δω)` when the frequencies form an arithmetic sequence; enables
    /// evaluation by phasor recurrence.
    arithmetic: Option<(f64, f64)>,
    /// `A_k e^{iφ_k}` and `ω_k A_k e^{iφ_k}`, grouped in lanes (zero-padded).
    lanes: Vec<LaneGroup>,
}

const LANES: usize = 8;
const BLOCK_GROUPS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct LaneGroup {
    cr: [f64; LANES],
    ci: [f64; LANES],
    wcr: [f64; LANES],
    wci: [f64; LANES],
}

impl Multisine {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != frequencies.len() || phases.len() != frequencies.len() {
            return Err(invalid("multisine", "amplitudes, frequencies and phases differ in length"));
        }
        if amplitudes.iter().chain(&frequencies).chain(&phases).any(|v| !v.is_finite()) {
            return Err(invalid("multisine", "non-finite component"));
        }
        let arithmetic = if frequencies.len() >= 2 {
            let d = frequencies[1] - frequencies[0];
            let uniform = frequencies
                .iter()
                .enumerate()
                .all(|(k, w)| (w - (frequencies[0] + k as f64 * d)).abs() <= 1e-9 * w.abs().max(1.0));
            uniform.then_some((frequencies[0], d))
        } else {
            None
        };
        let mut lanes = vec![LaneGroup::default(); frequencies.len().div_ceil(LANES)];
        for (k, ((a, p), w)) in amplitudes.iter().zip(&phases).zip(&frequencies).enumerate() {
            let g = &mut lanes[k / LANES];
            let l = k % LANES;
            g.cr[l] = a * p.cos();
            g.ci[l] = a * p.sin();
            g.wcr[l] = w * g.cr[l];
            g.wci[l] = w * g.ci[l];
        }
        Ok(Multisine {
            amplitudes,
            frequencies,
            phases,
            arithmetic,
            lanes,
        })
    }

    pub fn harmonic(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        Multisine::new(vec![amplitude], vec![frequency], vec![phase])
    }

    pub fn zero() -> Self {
        Multisine::new(Vec::new(), Vec::new(), Vec::new()).expect("empty multisine")
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Mean square over a long window, `Σ A_k²/2`.
    pub fn mean_power(&self) -> f64 {
        self.amplitudes.iter().map(|a| 0.5 * a * a).sum()
    }
}

impl InputSignal for Multisine {
    fn value_and_derivative(&self, t: f64) -> (f64, f64) {
        match self.arithmetic {
            Some((w0, dw)) => {
                // Phasors e^{i ω_k t} by rotation, LANES interleaved chains
                // re-anchored every block to bound round-off growth.
                let (rc, rs) = ((LANES as f64 * dw * t).cos(), (LANES as f64 * dw * t).sin());
                let mut u = [0.0; LANES];
                let mut du = [0.0; LANES];
                for (b, block) in self.lanes.chunks(BLOCK_GROUPS).enumerate() {
                    let k0 = b * BLOCK_GROUPS * LANES;
                    let mut zc = [0.0; LANES];
                    let mut zs = [0.0; LANES];
                    for l in 0..LANES {
                        let th = (w0 + (k0 + l) as f64 * dw) * t;
                        zc[l] = th.cos();
                        zs[l] = th.sin();
                    }
                    for g in block {
                        for l in 0..LANES {
                            u[l] += g.cr[l] * zc[l] - g.ci[l] * zs[l];
                            du[l] -= g.wcr[l] * zs[l] + g.wci[l] * zc[l];
                            let nc = zc[l] * rc - zs[l] * rs;
                            zs[l] = zc[l] * rs + zs[l] * rc;
                            zc[l] = nc;
                        }
                    }
                }
                (u.iter().sum(), du.iter().sum())
            }
            None => {
                let mut u = 0.0;
                let mut du = 0.0;
                for ((a, w), p) in self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases) {
                    let th = w * t + p;
                    u += a * th.cos();
                    du -= a * w * th.sin();
                }
                (u, du)
            }
        }
    }
}

/// JONSWAP spectrum parameters. Frequencies are angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JonswapParams {
    pub significant_height: f64,
    pub peak_period: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub gamma: f64,
    pub frequencies: Vec<f64>,
    /// Multiplies every multisine amplitude.
    pub amplitude_scale: f64,
    pub seed: u64,
}

impl JonswapParams {
    /// H_s = 10 m, T_p = 0.5 s, σ_p = 0.07 / 0.09, γ = 3.3 on ω = 0.02:0.02:100.
    pub fn reference(seed: u64) -> Self {
        JonswapParams {
            significant_height: 10.0,
            peak_period: 0.5,
            sigma_low: 0.07,
            sigma_high: 0.09,
            gamma: 3.3,
            frequencies: uniform_grid(0.02, 0.02, 100.0),
            amplitude_scale: 1.0,
            seed,
        }
    }

    pub fn peak_frequency(&self) -> f64 {
        2.0 * PI / self.peak_period
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("significant_height", self.significant_height),
            ("peak_period", self.peak_period),
            ("sigma_low", self.sigma_low),
            ("sigma_high", self.sigma_high),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.amplitude_scale >= 0.0 && self.amplitude_scale.is_finite()) {
            return Err(invalid("amplitude_scale", "must be >= 0"));
        }
        if self.frequencies.is_empty() || self.frequencies[0] <= 0.0 {
            return Err(invalid("frequencies", "grid must be non-empty and positive"));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("frequencies", "grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// `start, start+step, …` up to and including `stop` (within rounding).
pub fn uniform_grid(start: f64, step: f64, stop: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| start + k as f64 * step).collect()
}

/// `S(ω) = 320 (H_s/T_p²)² ω⁻⁵ exp(−1.25 (ω_p/ω)⁴) γ^r`, with
/// `r = exp(−(ω−ω_p)² / (2 σ_p² ω_p²))`.
pub fn jonswap_spectrum(omega: f64, p: &JonswapParams) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let wp = p.peak_frequency();
    let sigma = if omega < wp { p.sigma_low } else { p.sigma_high };
    let r = (-(omega - wp).powi(2) / (2.0 * sigma * sigma * wp * wp)).exp();
    let hs = p.significant_height / (p.peak_period * p.peak_period);
    320.0 * hs * hs * omega.powi(-5) * (-1.25 * (wp / omega).powi(4)).exp() * p.gamma.powf(r)
}

/// Random-phase multisine with `A_k = scale·√(2 S(ω_k) Δω_k)` and phases
/// uniform on `[0, 2π)` drawn from the seed.
pub fn jonswap_multisine(p: &JonswapParams) -> Result<Multisine> {
    p.validate()?;
    let w = &p.frequencies;
    let n = w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let amplitudes = (0..n)
        .map(|k| {
            let dw = match n {
                1 => 1.0,
                _ if k == 0 => w[1] - w[0],
                _ if k == n - 1 => w[n - 1] - w[n - 2],
                _ => 0.5 * (w[k + 1] - w[k - 1]),
            };
            p.amplitude_scale * (2.0 * jonswap_spectrum(w[k], p) * dw).sqrt()
        })
        .collect();
    let phases = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    Multisine::new(amplitudes, w.clone(), phases)
}

/// Uniformly sampled signal, linearly interpolated; held constant outside
/// the sampled range. The derivative is the local slope.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    /// Explicit derivative samples; the interpolant's slope is used if absent.
    pub derivatives: Option<Vec<f64>>,
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, derivatives: Option<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || values.is_empty() {
            return Err(invalid("sampled_signal", "needs dt > 0 and at least one sample"));
        }
        if derivatives.as_ref().is_some_and(|d| d.len() != values.len()) {
            return Err(invalid("sampled_signal", "derivative length mismatch"));
        }
        Ok(SampledSignal {
            t0,
            dt,
            values,
            derivatives,
        })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let x = ((t - self.t0) / self.dt).max(0.0);
        let last = self.values.len() - 1;
        let i = (x.floor() as usize).min(last.saturating_sub(1));
        (i, (x - i as f64).clamp(0.0, 1.0))
    }
}

impl InputSignal for SampledSignal {
    fn value_and_derivative(&self, t: f64) -> (f64, f64) {
        if self.values.len() == 1 {
            return (self.values[0], self.derivatives.as_ref().map_or(0.0, |d| d[0]));
        }
        let (i, s) = self.locate(t);
        let v = self.values[i] * (1.0 - s) + self.values[i + 1] * s;
        let d = match &self.derivatives {
            Some(d) => d[i] * (1.0 - s) + d[i + 1] * s,
            None => (self.values[i + 1] - self.values[i]) / self.dt,
        };
        (v, d)
    }
}
