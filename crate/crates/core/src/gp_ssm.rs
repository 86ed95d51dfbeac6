//! Temporal Gaussian-process priors written as linear stochastic
//! differential equations.
//!
//! A stationary Matérn kernel of smoothness ν = p + 1/2 admits an exact
//! state-space form `ḟ = A f + L w` with white noise of spectral density `q`.
//! Only the exponential kernel (ν = 1/2, state dimension one) is enabled;
//! [`Smoothness`] is the hook for higher orders.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ssm_builder::ContinuousStateModel;

/// Matérn smoothness parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[non_exhaustive]
pub enum Smoothness {
    /// ν = 1/2, the exponential kernel.
    Half,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        if (nu - 0.5).abs() < 1e-12 {
            Ok(Smoothness::Half)
        } else {
            Err(Error::UnsupportedKernel(nu))
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
        }
    }
}

/// Hyperparameters of a stationary Matérn kernel in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Signal variance σ_f² (force²).
    pub variance: f64,
    /// Length scale l (seconds).
    pub lengthscale: f64,
    pub smoothness: Smoothness,
}

impl KernelSpec {
    pub fn new(variance: f64, lengthscale: f64, nu: f64) -> Result<Self> {
        let smoothness = Smoothness::from_nu(nu)?;
        let spec = KernelSpec {
            variance,
            lengthscale,
            smoothness,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Exponential (Matérn-1/2) kernel.
    pub fn exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(variance, lengthscale, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(invalid("variance", format!("must be > 0, got {}", self.variance)));
        }
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(invalid(
                "lengthscale",
                format!("must be > 0, got {}", self.lengthscale),
            ));
        }
        Ok(())
    }

    /// Covariance κ(t, t').
    pub fn eval(&self, t: f64, t_prime: f64) -> f64 {
        let r = (t - t_prime).abs();
        match self.smoothness {
            Smoothness::Half => self.variance * (-r / self.lengthscale).exp(),
        }
    }

    /// Gram matrix over a set of time stamps.
    pub fn gram(&self, times: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(times.len(), times.len(), |i, j| self.eval(times[i], times[j]))
    }
}

/// Covariance function evaluation; see [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, t: f64, t_prime: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.eval(t, t_prime))
}

/// State-space form of a GP latent force: `ḟ = A_f f + L_f w`, `E[w(t)w(s)] = q δ(t−s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentForceSSM {
    pub drift: DMatrix<f64>,
    pub noise_loading: DVector<f64>,
    pub spectral_density: f64,
}

impl LatentForceSSM {
    /// β, the dimension of the force state vector `[f, ḟ, …]`.
    pub fn state_dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn to_continuous(&self) -> ContinuousStateModel {
        ContinuousStateModel {
            a: self.drift.clone(),
            b: DMatrix::zeros(self.state_dim(), 0),
            l: self.noise_loading.clone(),
            q: self.spectral_density,
        }
    }
}

/// Exact state-space representation of the exponential kernel.
///
/// `A_f = [−1/l]`, `L_f = [1]`, `q = 2σ_f²/l`.
pub fn matern_half_to_ssm(spec: &KernelSpec) -> Result<LatentForceSSM> {
    spec.validate()?;
    match spec.smoothness {
        Smoothness::Half => Ok(LatentForceSSM {
            drift: DMatrix::from_element(1, 1, -1.0 / spec.lengthscale),
            noise_loading: DVector::from_element(1, 1.0),
            spectral_density: 2.0 * spec.variance / spec.lengthscale,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_parameters() {
        let ssm = matern_half_to_ssm(&KernelSpec::exponential(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(ssm.drift[(0, 0)], -1.0);
        assert_eq!(ssm.noise_loading[0], 1.0);
        assert_eq!(ssm.spectral_density, 2.0);
        assert_eq!(ssm.state_dim(), 1);
    }

    #[test]
    fn switching_optimum_hyperparameters() {
        let ssm = matern_half_to_ssm(&KernelSpec::exponential(10.19, 27.02).unwrap()).unwrap();
        assert_relative_eq!(ssm.drift[(0, 0)], -1.0 / 27.02, epsilon = 1e-15);
        assert_relative_eq!(ssm.spectral_density, 2.0 * 10.19 / 27.02, epsilon = 1e-15);
    }

    #[test]
    fn stationary_variance_is_signal_variance() {
        let spec = KernelSpec::exponential(4.373, 52.77).unwrap();
        let ssm = matern_half_to_ssm(&spec).unwrap();
        // 1-D Lyapunov: 2 a P + q = 0 → P = q l / 2.
        let p = ssm.spectral_density * spec.lengthscale / 2.0;
        assert_relative_eq!(p, 4.373, max_relative = 1e-12);
        let p_solved = ssm.to_continuous().stationary_covariance().unwrap();
        assert_relative_eq!(p_solved[(0, 0)], 4.373, max_relative = 1e-10);
    }

    #[test]
    fn rejects_other_smoothness() {
        assert_eq!(KernelSpec::new(1.0, 1.0, 1.5), Err(Error::UnsupportedKernel(1.5)));
        assert!(KernelSpec::new(0.0, 1.0, 0.5).is_err());
        assert!(KernelSpec::new(1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::exponential(3.0, 2.0).unwrap();
        assert_eq!(kernel_eval(&k, 0.7, 0.7).unwrap(), 3.0);
        let k1 = KernelSpec::exponential(1.0, 1.0).unwrap();
        assert_relative_eq!(kernel_eval(&k1, 0.0, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(kernel_eval(&k1, 1.0, 0.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gram_matrix_is_positive_definite() {
        let k = KernelSpec::exponential(1.3, 0.4).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let g = k.gram(&times);
        assert_eq!(g, g.transpose());
        let min = g.symmetric_eigen().eigenvalues.min();
        assert!(min > 0.0, "min eigenvalue {min}");
    }
}
