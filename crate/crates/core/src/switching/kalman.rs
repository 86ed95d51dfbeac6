//! Linear-Gaussian prediction and update steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density, right_solve_spd, symmetrize};
use crate::ssm_builder::{DiscreteTransition, ExcitationKind, ObservationModel, SystemParams};

/// Mean and covariance of a Gaussian state belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Gaussian { mean, cov }
    }
}

/// `x⁻ = A x + B u`, `P⁻ = A P Aᵀ + Q`. `bu` is the precomputed `B u`.
pub fn kalman_predict_with(tr: &DiscreteTransition, prior: &Gaussian, bu: &DVector<f64>) -> Gaussian {
    let mean = &tr.a * &prior.mean + bu;
    let mut cov = &tr.a * &prior.cov * tr.a.transpose() + &tr.q;
    symmetrize(&mut cov);
    Gaussian { mean, cov }
}

pub fn kalman_predict(tr: &DiscreteTransition, prior: &Gaussian, input: &DVector<f64>) -> Gaussian {
    let bu = if tr.b.ncols() == 0 {
        DVector::zeros(prior.mean.len())
    } else {
        &tr.b * input
    };
    kalman_predict_with(tr, prior, &bu)
}

/// Conditions a predicted belief on `y`; returns the posterior and
/// `log N(y; C x⁻ + D u, C P⁻ Cᵀ + R)`. `du` is the precomputed `D u`.
pub fn kalman_update_with(
    obs: &ObservationModel,
    pred: &Gaussian,
    du: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(Gaussian, f64)> {
    let c = &obs.c;
    let innovation = y - (c * &pred.mean + du);
    let pct = &pred.cov * c.transpose();
    let mut s = c * &pct + &obs.r;
    symmetrize(&mut s);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInnovation);
    }
    let log_evidence = gaussian_log_density(&innovation, &s)?;
    let gain = if s.nrows() == 1 {
        pct / s[(0, 0)]
    } else {
        right_solve_spd(&pct, &s)?
    };
    let mean = &pred.mean + &gain * &innovation;
    // Joseph form keeps the covariance symmetric positive semi-definite.
    let n = pred.mean.len();
    let i_kc = DMatrix::<f64>::identity(n, n) - &gain * c;
    let mut cov = &i_kc * &pred.cov * i_kc.transpose() + &gain * &obs.r * gain.transpose();
    symmetrize(&mut cov);
    Ok((Gaussian { mean, cov }, log_evidence))
}

pub fn kalman_update(
    obs: &ObservationModel,
    pred: &Gaussian,
    input: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(Gaussian, f64)> {
    let du = if obs.d.ncols() == 0 {
        DVector::zeros(y.len())
    } else {
        &obs.d * input
    };
    kalman_update_with(obs, pred, &du, y)
}

/// Rauch–Tung–Striebel backward step given the filtered belief at `t`, the
/// prediction of `t+1` made from it, the cross-covariance `Cov(x_t, x_{t+1})`
/// and the smoothed belief at `t+1`.
pub fn rts_step(
    filtered: &Gaussian,
    predicted: &Gaussian,
    cross: &DMatrix<f64>,
    smoothed_next: &Gaussian,
) -> Result<Gaussian> {
    let gain = right_solve_spd(cross, &predicted.cov)?;
    let mean = &filtered.mean + &gain * (&smoothed_next.mean - &predicted.mean);
    let mut cov = &filtered.cov + &gain * (&smoothed_next.cov - &predicted.cov) * gain.transpose();
    symmetrize(&mut cov);
    Ok(Gaussian { mean, cov })
}

/// Prediction density of the sticking phase.
///
/// The mean keeps the displacement, zeroes the velocity and sets the friction
/// force to the net applied load `u_eff − k z`, where `u_eff = u` for a
/// directly forced mass and `k u + c u̇` for base motion. The covariance is
/// carried over unchanged.
pub fn sticking_predict(
    prev: &Gaussian,
    input: &[f64],
    params: &SystemParams,
    excitation: ExcitationKind,
) -> Gaussian {
    let mut mean = DVector::zeros(prev.mean.len());
    let z = prev.mean[0];
    mean[0] = z;
    mean[2] = excitation.effective_force(params, input) - params.stiffness * z;
    Gaussian {
        mean,
        cov: prev.cov.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn conjugate_scalar_update() {
        let tr = DiscreteTransition {
            a: scalar(1.0),
            b: DMatrix::zeros(1, 0),
            q: scalar(0.0),
        };
        let obs = ObservationModel {
            c: scalar(1.0),
            d: DMatrix::zeros(1, 0),
            r: scalar(1.0),
        };
        let prior = Gaussian::new(DVector::from_element(1, 0.0), scalar(1.0));
        let pred = kalman_predict(&tr, &prior, &DVector::zeros(0));
        let (post, ll) = kalman_update(&obs, &pred, &DVector::zeros(0), &DVector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(post.mean[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-15);
        // y ~ N(0, 2)
        let expected = -0.5 * ((2.0 * std::f64::consts::PI * 2.0).ln() + 0.5);
        assert_relative_eq!(ll, expected, epsilon = 1e-14);
    }

    #[test]
    fn noiseless_exact_model_tracks_trajectory() {
        let tr = DiscreteTransition {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            b: DMatrix::zeros(2, 0),
            q: DMatrix::zeros(2, 2),
        };
        let obs = ObservationModel {
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            d: DMatrix::zeros(1, 0),
            r: scalar(1e-12),
        };
        let truth0 = DVector::from_vec(vec![0.5, -0.2]);
        let mut x = truth0.clone();
        let mut belief = Gaussian::new(DVector::zeros(2), DMatrix::identity(2, 2));
        for t in 0..20 {
            if t > 0 {
                x = &tr.a * &x;
                belief = kalman_predict(&tr, &belief, &DVector::zeros(0));
            }
            let y = DVector::from_element(1, x[0]);
            belief = kalman_update(&obs, &belief, &DVector::zeros(0), &y).unwrap().0;
        }
        assert_relative_eq!(belief.mean, x, epsilon = 1e-6);
    }

    #[test]
    fn sticking_mean_and_covariance() {
        let params = SystemParams::new(1.0, 5.0, 500.0).unwrap();
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, 0.1, 2.0, 0.3, 0.0, 0.3, 3.0]);
        let prev = Gaussian::new(DVector::from_vec(vec![0.01, 0.3, 2.0]), cov.clone());
        let p = sticking_predict(&prev, &[6.0], &params, ExcitationKind::DirectForce);
        assert_relative_eq!(p.mean, DVector::from_vec(vec![0.01, 0.0, 1.0]), epsilon = 1e-12);
        assert_eq!(p.cov, cov);
    }

    #[test]
    fn sticking_base_motion_force() {
        let params = SystemParams::new(3.0799, 0.6691, 1191.0).unwrap();
        let prev = Gaussian::new(DVector::from_vec(vec![0.001, 0.0, 0.0]), DMatrix::identity(3, 3));
        let p = sticking_predict(&prev, &[0.002, 0.0], &params, ExcitationKind::BaseMotion);
        assert_relative_eq!(p.mean[2], 1.191, epsilon = 1e-12);
    }

    #[test]
    fn infinite_innovation_is_rejected() {
        let obs = ObservationModel {
            c: scalar(1.0),
            d: DMatrix::zeros(1, 0),
            r: scalar(f64::INFINITY),
        };
        let pred = Gaussian::new(DVector::zeros(1), scalar(1.0));
        assert_eq!(
            kalman_update(&obs, &pred, &DVector::zeros(0), &DVector::zeros(1)).unwrap_err(),
            Error::NonFiniteInnovation
        );
    }
}
