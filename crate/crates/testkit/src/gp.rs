use nalgebra::{DMatrix, DVector};

/// Posterior mean and marginal variance of a zero-mean GP with covariance
/// `σ² exp(−|t − t'|/l)` at the training times, given noisy observations.
pub fn exponential_gp_posterior(
    times: &[f64],
    y: &[f64],
    variance: f64,
    lengthscale: f64,
    noise_variance: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = times.len();
    let k = DMatrix::from_fn(n, n, |i, j| variance * (-(times[i] - times[j]).abs() / lengthscale).exp());
    let ky = &k + DMatrix::identity(n, n) * noise_variance;
    let inv = ky.try_inverse().expect("invertible Gram matrix");
    let yv = DVector::from_column_slice(y);
    let mean = &k * (&inv * yv);
    let cov = &k - &k * &inv * &k;
    (mean.iter().cloned().collect(), (0..n).map(|i| cov[(i, i)]).collect())
}

/// `log N(y; 0, K + σ_n² I)` for the same kernel.
pub fn exponential_gp_log_marginal(times: &[f64], y: &[f64], variance: f64, lengthscale: f64, noise_variance: f64) -> f64 {
    let n = times.len();
    let k = DMatrix::from_fn(n, n, |i, j| variance * (-(times[i] - times[j]).abs() / lengthscale).exp())
        + DMatrix::identity(n, n) * noise_variance;
    let yv = DVector::from_column_slice(y);
    let chol = k.clone().cholesky().expect("positive definite");
    let alpha = chol.solve(&yv);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (yv.dot(&alpha) + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln())
}
