//! Post-identification: error indices, linear-residual parameter
//! correction, friction recovery, static friction and friction-law fitting,
//! base-input smoothing and forward prediction.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::friction_sim::{simulate_stick_slip, FrictionParams, InputSignal, Trajectory};
use crate::hyper_opt::{map_estimate, GaussianPrior};
use crate::optim::{multi_start_max, Bounds, NelderMeadOptions};
use crate::ssm_builder::{DiscreteTransition, ExcitationKind, ObservationModel, RegimeKind, SystemParams};
use crate::switching::{kalman_predict_with, kalman_update_with, rts_step, Gaussian, GaussianMixtureBelief};

fn mean_and_variance(g: &[f64]) -> (f64, f64) {
    let n = g.len() as f64;
    let m = g.iter().sum::<f64>() / n;
    (m, g.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

/// Population variance of a series.
pub fn variance(g: &[f64]) -> f64 {
    mean_and_variance(g).1
}

/// Normalised mean squared error in percent.
pub fn nmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "nmse over {} truth and {} estimate samples",
            truth.len(),
            estimate.len()
        )));
    }
    let (_, var) = mean_and_variance(truth);
    if !(var > 0.0) {
        return Err(Error::ConstantTruth);
    }
    let sse: f64 = truth.iter().zip(estimate).map(|(g, e)| (g - e) * (g - e)).sum();
    Ok(100.0 * sse / (truth.len() as f64 * var))
}

/// Normalised mean variance in percent.
pub fn nmv(truth_variance: f64, variances: &[f64]) -> Result<f64> {
    if !(truth_variance > 0.0) {
        return Err(Error::ConstantTruth);
    }
    if variances.is_empty() {
        return Err(Error::DimensionMismatch("nmv over an empty series".into()));
    }
    Ok(100.0 * variances.iter().sum::<f64>() / (variances.len() as f64 * truth_variance))
}

/// Velocity and force posteriors at steps judged to be sliding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceVelocityEstimates {
    pub time_index: Vec<usize>,
    pub velocity_mean: Vec<f64>,
    pub velocity_var: Vec<f64>,
    pub force_mean: Vec<f64>,
    pub force_var: Vec<f64>,
}

impl ForceVelocityEstimates {
    /// Keeps steps whose smoothed probability of not sticking exceeds 0.5.
    pub fn from_beliefs(beliefs: &[GaussianMixtureBelief], kinds: &[RegimeKind]) -> Self {
        let stick = kinds.iter().position(|k| *k == RegimeKind::Sticking);
        let mut out = ForceVelocityEstimates::default();
        for (t, b) in beliefs.iter().enumerate() {
            let p_stick = stick.map_or(0.0, |s| b.regimes[s].prob);
            if 1.0 - p_stick > 0.5 {
                let g = b.moments();
                out.time_index.push(t);
                out.velocity_mean.push(g.mean[1]);
                out.velocity_var.push(g.cov[(1, 1)]);
                out.force_mean.push(g.mean[2]);
                out.force_var.push(g.cov[(2, 2)]);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.force_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.force_mean.is_empty()
    }
}

/// Least-squares fit of the latent force on the linear regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearResidualFit {
    pub excitation: ExcitationKind,
    /// `A_0..A_3` for direct forcing, `A_0..A_2` for base motion.
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
}

impl LinearResidualFit {
    pub fn a(&self, i: usize) -> f64 {
        self.coefficients.get(i).copied().unwrap_or(0.0)
    }
}

/// Samples entering [`fit_linear_residual`] and [`recover_friction`].
/// `udot` may be empty for direct forcing.
#[derive(Debug, Clone, Copy)]
pub struct ResidualSamples<'a> {
    pub force: &'a [f64],
    pub z: &'a [f64],
    pub zdot: &'a [f64],
    pub u: &'a [f64],
    pub udot: &'a [f64],
}

impl ResidualSamples<'_> {
    fn check(&self, excitation: ExcitationKind) -> Result<usize> {
        let n = self.force.len();
        if self.z.len() != n || self.zdot.len() != n || self.u.len() != n {
            return Err(Error::DimensionMismatch("residual samples".into()));
        }
        if excitation == ExcitationKind::BaseMotion && self.udot.len() != n {
            return Err(Error::DimensionMismatch("base motion needs udot samples".into()));
        }
        Ok(n)
    }

    /// Regressor row without the intercept.
    fn regressors(&self, i: usize, excitation: ExcitationKind) -> Vec<f64> {
        match excitation {
            ExcitationKind::DirectForce => vec![self.z[i], self.zdot[i], self.u[i]],
            ExcitationKind::BaseMotion => vec![self.z[i] - self.u[i], self.zdot[i] - self.udot[i]],
        }
    }
}

/// Fits `F_L = A_0 + A_1 z + A_2 ż + A_3 u` (direct forcing) or
/// `F_L = A_0 + A_1 (z−u) + A_2 (ż−u̇)` (base motion).
///
/// The friction force is odd in the velocity, so samples with `ż < 0` are
/// reflected through the origin (regressors and response negated, intercept
/// kept) to superpose both branches before fitting.
pub fn fit_linear_residual(samples: &ResidualSamples<'_>, excitation: ExcitationKind) -> Result<LinearResidualFit> {
    let n = samples.check(excitation)?;
    let p = 1 + match excitation {
        ExcitationKind::DirectForce => 3,
        ExcitationKind::BaseMotion => 2,
    };
    if n < 10 * p {
        return Err(invalid("samples", format!("need at least {} samples, got {n}", 10 * p)));
    }
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let s = if samples.zdot[i] < 0.0 { -1.0 } else { 1.0 };
        x[(i, 0)] = 1.0;
        for (j, v) in samples.regressors(i, excitation).into_iter().enumerate() {
            x[(i, j + 1)] = s * v;
        }
        y[i] = s * samples.force[i];
    }
    let coef = least_squares(&x, &y)?;
    let resid = &y - &x * &coef;
    Ok(LinearResidualFit {
        excitation,
        coefficients: coef.iter().copied().collect(),
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// Column-scaled QR least squares; rank deficiency is an error.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = x.ncols();
    let scales: Vec<f64> = (0..p).map(|j| x.column(j).amax()).collect();
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = xs.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if sv.iter().any(|s| *s <= smax * 1e-12) {
        return Err(Error::RankDeficient);
    }
    let b = svd.solve(y, 0.0).map_err(|_| Error::RankDeficient)?;
    Ok(DVector::from_iterator(p, b.iter().zip(&scales).map(|(v, s)| v / s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterCorrection {
    pub delta_mass: f64,
    pub delta_damping: f64,
    pub delta_stiffness: f64,
    pub corrected: SystemParams,
}

const SINGULAR_TOL: f64 = 1e-9;

/// Maps fitted coefficients to parameter errors and adds them to the guesses.
/// For base motion the mass is not identifiable and is left unchanged.
pub fn correct_parameters(fit: &LinearResidualFit, guesses: &SystemParams) -> Result<ParameterCorrection> {
    let (dm, dc, dk) = match fit.excitation {
        ExcitationKind::DirectForce => {
            let a3 = fit.a(3);
            let den = 1.0 - a3;
            if den.abs() < SINGULAR_TOL {
                return Err(Error::SingularCorrection(a3));
            }
            (
                a3 * guesses.mass / den,
                (fit.a(2) + a3 * guesses.damping) / den,
                (fit.a(1) + a3 * guesses.stiffness) / den,
            )
        }
        ExcitationKind::BaseMotion => (0.0, fit.a(2), fit.a(1)),
    };
    let corrected = SystemParams {
        mass: guesses.mass + dm,
        damping: guesses.damping + dc,
        stiffness: guesses.stiffness + dk,
    };
    if !(corrected.mass > 0.0) || !(corrected.stiffness > 0.0) {
        return Err(invalid(
            "corrected parameters",
            format!("mass {} and stiffness {} must stay positive", corrected.mass, corrected.stiffness),
        ));
    }
    Ok(ParameterCorrection {
        delta_mass: dm,
        delta_damping: dc,
        delta_stiffness: dk,
        corrected,
    })
}

/// `F_f = (F_L − A_1 z − A_2 ż − A_3 u)/(1 − A_3)`; variances scale by
/// `1/(1 − A_3)²` (state uncertainty is not propagated).
pub fn recover_friction(
    samples: &ResidualSamples<'_>,
    force_var: &[f64],
    fit: &LinearResidualFit,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if fit.excitation != ExcitationKind::DirectForce {
        return Err(invalid("fit", "friction recovery applies to direct forcing"));
    }
    let n = samples.check(ExcitationKind::DirectForce)?;
    if force_var.len() != n {
        return Err(Error::DimensionMismatch("force variances".into()));
    }
    let a3 = fit.a(3);
    let den = 1.0 - a3;
    if den.abs() < SINGULAR_TOL {
        return Err(Error::SingularCorrection(a3));
    }
    let mean = (0..n)
        .map(|i| (samples.force[i] - fit.a(1) * samples.z[i] - fit.a(2) * samples.zdot[i] - a3 * samples.u[i]) / den)
        .collect();
    let var = force_var.iter().map(|v| v / (den * den)).collect();
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticFrictionEstimate {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// `|E(F)|` at the last sticking step before every stick→slip transition of
/// the MAP regime sequence (resetting counts as slip).
pub fn estimate_static_friction(
    beliefs: &[GaussianMixtureBelief],
    map: &[usize],
    kinds: &[RegimeKind],
) -> Result<StaticFrictionEstimate> {
    if beliefs.len() != map.len() {
        return Err(Error::DimensionMismatch("beliefs and regime sequence".into()));
    }
    let stick = kinds.iter().position(|k| *k == RegimeKind::Sticking).ok_or(Error::NoStops)?;
    let force: Vec<f64> = beliefs.iter().map(|b| b.moments().mean[2]).collect();
    static_friction_from_series(&force, map, stick)
}

/// As [`estimate_static_friction`] on a precomputed force-mean series.
pub fn static_friction_from_series(force_mean: &[f64], map: &[usize], stick: usize) -> Result<StaticFrictionEstimate> {
    if force_mean.len() != map.len() {
        return Err(Error::DimensionMismatch("force series and regime sequence".into()));
    }
    let values: Vec<f64> = (0..map.len().saturating_sub(1))
        .filter(|&t| map[t] == stick && map[t + 1] != stick)
        .map(|t| force_mean[t].abs())
        .collect();
    if values.is_empty() {
        return Err(Error::NoStops);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n == 1 {
        warn!("static friction from a single transition; standard deviation set to 0");
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(StaticFrictionEstimate { mean, sd, count: n })
}

/// Friction-law fit of sign-folded force–velocity data with `V*` and `ε`
/// fixed. With a static-friction estimate, `b` is tied to the other
/// parameters by `b = a + (F_s − F*)/(ln V* − ln ε)`.
///
/// For fixed `c` the law is linear in `(F*, a, b)`, so those are solved by
/// least squares and only `ln c` is searched numerically.
pub fn fit_friction_law(
    est: &ForceVelocityEstimates,
    v_star: f64,
    epsilon: f64,
    static_friction: Option<&StaticFrictionEstimate>,
) -> Result<FrictionParams> {
    if est.len() < 20 {
        return Err(invalid("estimates", format!("need at least 20 slip samples, got {}", est.len())));
    }
    if !(v_star > 0.0) || !(epsilon > 0.0) {
        return Err(invalid("v_star", "V* and ε must be positive"));
    }
    let speed: Vec<f64> = est.velocity_mean.iter().map(|v| v.abs()).collect();
    let force: Vec<f64> = est
        .velocity_mean
        .iter()
        .zip(&est.force_mean)
        .map(|(v, f)| if *v < 0.0 { -f } else { *f })
        .collect();
    let l1: Vec<f64> = speed.iter().map(|s| ((s + epsilon) / v_star).ln()).collect();
    let d = (v_star / epsilon).ln();

    let solve = |c: f64| -> Option<(FrictionParams, f64)> {
        let n = speed.len();
        let l2: Vec<f64> = speed.iter().map(|s| (c + v_star / (s + epsilon)).ln()).collect();
        let (params, resid) = match static_friction {
            None => {
                let mut x = DMatrix::zeros(n, 3);
                for i in 0..n {
                    x[(i, 0)] = 1.0;
                    x[(i, 1)] = l1[i];
                    x[(i, 2)] = l2[i];
                }
                let y = DVector::from_column_slice(&force);
                let coef = least_squares(&x, &y).ok()?;
                let r = (&y - &x * &coef).norm_squared();
                ((coef[0], coef[1], coef[2]), r)
            }
            Some(sf) => {
                // F = F*(1 − L2/D) + a(L1 + L2) + F_s L2/D
                let mut x = DMatrix::zeros(n, 2);
                let mut y = DVector::zeros(n);
                for i in 0..n {
                    x[(i, 0)] = 1.0 - l2[i] / d;
                    x[(i, 1)] = l1[i] + l2[i];
                    y[i] = force[i] - sf.mean * l2[i] / d;
                }
                let coef = least_squares(&x, &y).ok()?;
                let r = (&y - &x * &coef).norm_squared();
                let (f_star, a) = (coef[0], coef[1]);
                ((f_star, a, constrained_b(a, f_star, sf.mean, v_star, epsilon)), r)
            }
        };
        let p = FrictionParams {
            f_star: params.0,
            a: params.1,
            b: params.2,
            c,
            v_star,
            epsilon,
        };
        p.validate().ok()?;
        Some((p, resid))
    };

    let bounds = Bounds::new(vec![(1e-8f64).ln()], vec![(1e3f64).ln()])?;
    let mut objective = |x: &[f64]| solve(x[0].exp()).map_or(f64::NEG_INFINITY, |(_, r)| -r);
    // Coarse grid for the starts: the residual can be multimodal in ln c.
    let mut grid: Vec<(f64, f64)> = (0..=44)
        .map(|i| {
            let lc = bounds.lower[0] + (bounds.upper[0] - bounds.lower[0]) * i as f64 / 44.0;
            (lc, objective(&[lc]))
        })
        .collect();
    grid.sort_by(|a, b| b.1.total_cmp(&a.1));
    let starts: Vec<Vec<f64>> = grid.iter().take(3).map(|(lc, _)| vec![*lc]).collect();
    let opts = NelderMeadOptions {
        max_evaluations: 600,
        initial_step: 0.01,
        f_tol: 0.0,
        x_tol: 1e-13,
    };
    let r = multi_start_max(&mut objective, &starts, &bounds, 600, &opts)
        .map_err(|e| Error::OptimizationFailure(format!("friction-law fit: {e}")))?;
    solve(r.x[0].exp())
        .map(|(p, _)| p)
        .ok_or_else(|| Error::OptimizationFailure("friction-law fit did not converge".into()))
}

/// `b = a + (F_s − F*)/(ln V* − ln ε)`.
pub fn constrained_b(a: f64, f_star: f64, static_force: f64, v_star: f64, epsilon: f64) -> f64 {
    a + (static_force - f_star) / (v_star.ln() - epsilon.ln())
}

/// Hyperparameters of the constant-acceleration base-input model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseInputSmoother {
    pub accel_variance: f64,
    pub noise_variance: f64,
}

impl BaseInputSmoother {
    pub fn validate(&self) -> Result<()> {
        if !(self.accel_variance > 0.0) || !(self.noise_variance > 0.0) {
            return Err(invalid("base_input_smoother", "variances must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseInputEstimate {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub u_var: Vec<f64>,
    pub udot_var: Vec<f64>,
    pub hyper: BaseInputSmoother,
    pub log_likelihood: f64,
}

fn kinematic_model(dt: f64, h: &BaseInputSmoother) -> (DiscreteTransition, ObservationModel) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let g = [0.5 * dt * dt, dt];
    let q = DMatrix::from_fn(2, 2, |i, j| h.accel_variance * g[i] * g[j]);
    (
        DiscreteTransition {
            a,
            b: DMatrix::zeros(2, 0),
            q,
        },
        ObservationModel {
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            d: DMatrix::zeros(1, 0),
            r: DMatrix::from_element(1, 1, h.noise_variance),
        },
    )
}

fn kinematic_prior(raw: &[f64], dt: f64) -> Gaussian {
    let (_, vy) = mean_and_variance(raw);
    let slopes: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let vs = if slopes.is_empty() { 0.0 } else { mean_and_variance(&slopes).1 + slopes[0] * slopes[0] };
    Gaussian::new(
        DVector::from_vec(vec![raw[0], 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![10.0 * vy + 1e-12, 10.0 * vs + 1e-12])),
    )
}

fn kinematic_filter(raw: &[f64], dt: f64, h: &BaseInputSmoother, keep: bool) -> Result<(Vec<Gaussian>, Vec<Gaussian>, f64)> {
    let (tr, obs) = kinematic_model(dt, h);
    let zero = DVector::zeros(2);
    let du = DVector::zeros(1);
    let mut filtered = Vec::with_capacity(if keep { raw.len() } else { 0 });
    let mut predicted = Vec::with_capacity(if keep { raw.len() } else { 0 });
    let mut belief = kinematic_prior(raw, dt);
    let mut ll = 0.0;
    for (t, y) in raw.iter().enumerate() {
        let pred = if t == 0 { belief.clone() } else { kalman_predict_with(&tr, &belief, &zero) };
        let (post, lev) = kalman_update_with(&obs, &pred, &du, &DVector::from_element(1, *y))?;
        ll += lev;
        if keep {
            predicted.push(pred);
            filtered.push(post.clone());
        }
        belief = post;
    }
    Ok((filtered, predicted, ll))
}

/// Kalman/RTS smoothing of a measured base displacement under a
/// piecewise-constant random acceleration. Without explicit hyperparameters
/// they are chosen by maximising the marginal likelihood (weak priors
/// centred on difference-based scale estimates).
pub fn smooth_base_input(raw: &[f64], f_s: f64, hyper: Option<BaseInputSmoother>, seed: u64) -> Result<BaseInputEstimate> {
    if raw.len() < 3 {
        return Err(invalid("raw", "need at least three samples"));
    }
    if !(f_s > 0.0) {
        return Err(invalid("f_s", "must be > 0"));
    }
    let dt = 1.0 / f_s;
    let h = match hyper {
        Some(h) => {
            h.validate()?;
            h
        }
        None => select_base_input_hyper(raw, dt, seed)?,
    };
    let (filtered, predicted, ll) = kinematic_filter(raw, dt, &h, true)?;
    let (tr, _) = kinematic_model(dt, &h);
    let n = raw.len();
    let mut smoothed = vec![filtered[n - 1].clone(); n];
    for t in (0..n - 1).rev() {
        let cross = &filtered[t].cov * tr.a.transpose();
        smoothed[t] = rts_step(&filtered[t], &predicted[t + 1], &cross, &smoothed[t + 1])?;
    }
    Ok(BaseInputEstimate {
        u: smoothed.iter().map(|g| g.mean[0]).collect(),
        udot: smoothed.iter().map(|g| g.mean[1]).collect(),
        u_var: smoothed.iter().map(|g| g.cov[(0, 0)]).collect(),
        udot_var: smoothed.iter().map(|g| g.cov[(1, 1)]).collect(),
        hyper: h,
        log_likelihood: ll,
    })
}

fn select_base_input_hyper(raw: &[f64], dt: f64, seed: u64) -> Result<BaseInputSmoother> {
    let d1: Vec<f64> = raw.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = raw.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let noise_scale = (mean_and_variance(&d1).1 / 2.0).max(1e-30);
    let accel_scale = (d2.iter().map(|v| v * v).sum::<f64>() / d2.len() as f64 / dt.powi(4)).max(1e-30);
    let priors = [
        GaussianPrior::new(accel_scale, (10.0 * accel_scale).powi(2))?,
        GaussianPrior::new(noise_scale, (10.0 * noise_scale).powi(2))?,
    ];
    let (x, _, _) = map_estimate(
        &priors,
        |x| {
            let h = BaseInputSmoother {
                accel_variance: x[0],
                noise_variance: x[1],
            };
            kinematic_filter(raw, dt, &h, false).map_or(f64::NEG_INFINITY, |r| r.2)
        },
        200,
        seed,
    )?;
    Ok(BaseInputSmoother {
        accel_variance: x[0],
        noise_variance: x[1],
    })
}

/// Forward simulation with identified parameters.
pub fn forward_predict(
    sys: &SystemParams,
    law: &FrictionParams,
    input: &dyn InputSignal,
    t_f: f64,
    excitation: ExcitationKind,
) -> Result<Trajectory> {
    simulate_stick_slip(sys, law, input, t_f, excitation)
}
