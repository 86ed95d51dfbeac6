//! MAP estimation of the latent-force kernel hyperparameters and the
//! measurement-noise variance.
//!
//! The objective is the ADF marginal log-likelihood plus independent Gaussian
//! log-priors. It is maximised in log-space with a multi-start bounded
//! Nelder–Mead whose box is the prior mean ± 6 standard deviations, floored at
//! a small positive value.

use log::debug;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp_ssm::KernelSpec;
use crate::optim::{multi_start_max, Bounds, NelderMeadOptions};
use crate::ssm_builder::{assemble_regimes, RegimeSpec};
use crate::switching::{adf_log_likelihood, markov_transition_matrix, InferenceConfig};

/// Minimum optimisation budget accepted by [`optimize`].
pub const MIN_BUDGET: usize = 50;

const BOUND_SDS: f64 = 6.0;

/// `N(mean, variance)` prior on a positive quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let p = GaussianPrior { mean, variance };
        p.validate("prior")?;
        Ok(p)
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(invalid(name, format!("prior variance must be > 0, got {}", self.variance)));
        }
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(invalid(name, format!("prior mean must be > 0, got {}", self.mean)));
        }
        Ok(())
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Smallest admissible value: the support is truncated here.
    pub fn floor(&self) -> f64 {
        (1e-3 * self.mean).min(1e-12)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if !(x >= self.floor()) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let r = x - self.mean;
        -0.5 * (r * r / self.variance + (2.0 * std::f64::consts::PI * self.variance).ln())
    }

    /// Natural-unit box `[max(mean − 6 sd, floor), mean + 6 sd]`.
    pub fn bounds(&self) -> (f64, f64) {
        let lo = (self.mean - BOUND_SDS * self.sd()).max(self.floor());
        (lo, self.mean + BOUND_SDS * self.sd())
    }
}

/// Independent priors over `(σ_f², l, σ_n²)` in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub signal_variance: GaussianPrior,
    pub lengthscale: GaussianPrior,
    pub noise_variance: GaussianPrior,
}

impl HyperPrior {
    /// σ_f² ~ N(20, 100) N², l ~ N(20, 100) s, σ_n² ~ N(2e-5, 1e-10) mm².
    pub fn reference() -> Self {
        HyperPrior {
            signal_variance: GaussianPrior {
                mean: 20.0,
                variance: 100.0,
            },
            lengthscale: GaussianPrior {
                mean: 20.0,
                variance: 100.0,
            },
            noise_variance: GaussianPrior {
                mean: 2e-11,
                variance: 1e-22,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.signal_variance.validate("prior.signal_variance")?;
        self.lengthscale.validate("prior.lengthscale")?;
        self.noise_variance.validate("prior.noise_variance")
    }

    fn as_array(&self) -> [GaussianPrior; 3] {
        [self.signal_variance, self.lengthscale, self.noise_variance]
    }

    pub fn log_density(&self, h: &Hyperparameters) -> f64 {
        self.signal_variance.log_density(h.signal_variance)
            + self.lengthscale.log_density(h.lengthscale)
            + self.noise_variance.log_density(h.noise_variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl Hyperparameters {
    fn from_slice(x: &[f64]) -> Self {
        Hyperparameters {
            signal_variance: x[0],
            lengthscale: x[1],
            noise_variance: x[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperEstimate {
    pub hyper: Hyperparameters,
    pub log_posterior: f64,
    pub evaluations: usize,
    /// Best-so-far log-posterior after each evaluation.
    pub trace: Vec<f64>,
}

/// Everything the marginal likelihood depends on besides the hyperparameters.
#[derive(Debug, Clone)]
pub struct HyperContext<'a> {
    /// Model template; its kernel and noise variance are overwritten per evaluation.
    pub spec: RegimeSpec,
    pub persistence: f64,
    pub inference: InferenceConfig,
    pub inputs: &'a [DVector<f64>],
    pub observations: &'a [DVector<f64>],
    /// Replaces the stationary zero-mean prior mean when set.
    pub prior_mean: Option<DVector<f64>>,
}

impl HyperContext<'_> {
    /// `log p(y | θ)`; any failure maps to −∞.
    pub fn log_likelihood(&self, h: &Hyperparameters) -> f64 {
        match self.try_log_likelihood(h) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                debug!("log-likelihood failed at {h:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    fn try_log_likelihood(&self, h: &Hyperparameters) -> Result<f64> {
        if !(h.noise_variance > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut spec = self.spec.clone();
        spec.kernel = KernelSpec::new(h.signal_variance, h.lengthscale, spec.kernel.smoothness.nu())?;
        spec.noise_variance = h.noise_variance;
        let mut set = assemble_regimes(&spec)?;
        if let Some(m) = &self.prior_mean {
            if m.len() != set.state_dim() {
                return Err(Error::DimensionMismatch("prior mean".into()));
            }
            set.prior_mean = m.clone();
        }
        let switch = markov_transition_matrix(set.len(), self.persistence)?;
        adf_log_likelihood(&set, &switch, self.inputs, self.observations, &self.inference)
    }
}

/// Log-likelihood plus log-prior; −∞ outside the prior support or on failure.
pub fn log_posterior(h: &Hyperparameters, prior: &HyperPrior, ctx: &HyperContext<'_>) -> f64 {
    let lp = prior.log_density(h);
    if lp == f64::NEG_INFINITY || !(h.signal_variance > 0.0 && h.lengthscale > 0.0 && h.noise_variance > 0.0) {
        return f64::NEG_INFINITY;
    }
    lp + ctx.log_likelihood(h)
}

/// Generic MAP search over positive parameters with independent Gaussian
/// priors. `log_lik` receives natural-unit parameters.
///
/// Starts: the prior mean, then prior draws (one per 100 evaluations of
/// budget), all seeded.
pub fn map_estimate<F: FnMut(&[f64]) -> f64>(
    priors: &[GaussianPrior],
    mut log_lik: F,
    budget: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if budget < MIN_BUDGET {
        return Err(invalid("budget", format!("must be >= {MIN_BUDGET}, got {budget}")));
    }
    let (lower, upper): (Vec<f64>, Vec<f64>) = priors
        .iter()
        .map(|p| {
            let (lo, hi) = p.bounds();
            (lo.ln(), hi.ln())
        })
        .unzip();
    let bounds = Bounds::new(lower, upper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_starts = (budget / 100).max(1);
    let mut starts = vec![priors.iter().map(|p| p.mean.ln()).collect::<Vec<f64>>()];
    while starts.len() < n_starts {
        let x: Vec<f64> = priors
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = Normal::new(p.mean, p.sd()).expect("validated prior");
                let v: f64 = d.sample(&mut rng);
                v.max(p.floor()).ln().clamp(bounds.lower[i], bounds.upper[i])
            })
            .collect();
        starts.push(x);
    }
    let mut objective = |z: &[f64]| {
        let x: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let lp: f64 = priors.iter().zip(&x).map(|(p, v)| p.log_density(*v)).sum();
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp + log_lik(&x)
    };
    let opts = NelderMeadOptions {
        max_evaluations: budget,
        initial_step: 0.05,
        f_tol: 1e-6,
        x_tol: 1e-6,
    };
    let r = multi_start_max(&mut objective, &starts, &bounds, budget, &opts)?;
    Ok((r.x.iter().map(|v| v.exp()).collect(), r.value, r.trace))
}

/// MAP hyperparameters for the switching (or standard) latent force model.
pub fn optimize(prior: &HyperPrior, ctx: &HyperContext<'_>, budget: usize, seed: u64) -> Result<HyperEstimate> {
    prior.validate()?;
    let priors = prior.as_array();
    let (x, value, trace) = map_estimate(&priors, |x| ctx.log_likelihood(&Hyperparameters::from_slice(x)), budget, seed)?;
    Ok(HyperEstimate {
        hyper: Hyperparameters::from_slice(&x),
        log_posterior: value,
        evaluations: trace.len(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_positive() {
        let p = HyperPrior::reference();
        for g in p.as_array() {
            let (lo, hi) = g.bounds();
            assert!(lo > 0.0 && hi > lo);
        }
        assert_eq!(p.noise_variance.bounds().1, 2e-11 + 6e-11);
    }

    #[test]
    fn density_outside_support() {
        let g = GaussianPrior::new(2e-11, 1e-22).unwrap();
        assert_eq!(g.log_density(0.0), f64::NEG_INFINITY);
        assert!(g.log_density(2e-11).is_finite());
    }

    #[test]
    fn map_of_gaussian_likelihood() {
        let priors = [GaussianPrior::new(1.0, 1.0).unwrap(), GaussianPrior::new(2.0, 4.0).unwrap()];
        // Flat-ish likelihood peaked at (1.5, 3); posterior mode is the precision-weighted mean.
        let (x, _, trace) = map_estimate(
            &priors,
            |x| -0.5 * ((x[0] - 1.5).powi(2) / 0.01 + (x[1] - 3.0).powi(2) / 0.04),
            400,
            1,
        )
        .unwrap();
        let m0 = (1.5 / 0.01 + 1.0 / 1.0) / (1.0 / 0.01 + 1.0);
        let m1 = (3.0 / 0.04 + 2.0 / 4.0) / (1.0 / 0.04 + 1.0 / 4.0);
        assert!((x[0] - m0).abs() < 1e-3 && (x[1] - m1).abs() < 1e-3, "{x:?}");
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn small_budget_rejected() {
        let priors = [GaussianPrior::new(1.0, 1.0).unwrap()];
        assert!(map_estimate(&priors, |_| 0.0, 10, 0).is_err());
    }
}
