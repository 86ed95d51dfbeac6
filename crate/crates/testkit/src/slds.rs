use nalgebra::{DMatrix, DVector};

use crate::kalman::{filter_smooth, Observation, Step};

/// A switching linear-Gaussian model with regime-dependent transitions and a
/// shared observation model. The regime at step `t` selects the transition
/// into `x_t`.
#[derive(Debug, Clone)]
pub struct SwitchingModel {
    pub transitions: Vec<Step>,
    pub observation: Observation,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// `P(s_0)`
    pub initial: Vec<f64>,
    /// `P(s_t = j | s_{t−1} = i)` at `[(i, j)]`
    pub switch: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `p(s_t | y_{0:t})`
    pub filtered_regimes: Vec<Vec<f64>>,
    /// `p(s_t | y_{0:T−1})`
    pub smoothed_regimes: Vec<Vec<f64>>,
    pub smoothed_means: Vec<DVector<f64>>,
    pub smoothed_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

fn sequences(s: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|seq| {
                (0..s).map(move |r| {
                    let mut v = seq.clone();
                    v.push(r);
                    v
                })
            })
            .collect();
    }
    out
}

/// Weighted Kalman runs over every regime sequence of length `len`.
fn enumerate(model: &SwitchingModel, ys: &[DVector<f64>], zero: &[DVector<f64>], len: usize) -> Vec<(f64, Vec<usize>, crate::kalman::KalmanRun)> {
    let s = model.initial.len();
    sequences(s, len)
        .into_iter()
        .filter_map(|seq| {
            let mut lp = model.initial[seq[0]].ln();
            for w in seq.windows(2) {
                lp += model.switch[(w[0], w[1])].ln();
            }
            if lp == f64::NEG_INFINITY {
                return None;
            }
            let steps: Vec<Step> = seq[1..].iter().map(|r| model.transitions[*r].clone()).collect();
            let run = filter_smooth(&model.m0, &model.p0, &steps, &model.observation, &zero[..len], &ys[..len]);
            Some((lp + run.log_likelihood, seq, run))
        })
        .collect()
}

fn normalize(runs: &mut [(f64, Vec<usize>, crate::kalman::KalmanRun)]) -> f64 {
    let max = runs.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = runs.iter().map(|r| (r.0 - max).exp()).sum();
    let log_z = max + total.ln();
    for r in runs.iter_mut() {
        r.0 = (r.0 - log_z).exp();
    }
    log_z
}

/// Exact posteriors by enumerating all `S^T` regime sequences.
pub fn exact_posterior(model: &SwitchingModel, ys: &[DVector<f64>]) -> ExactPosterior {
    let s = model.initial.len();
    let n_t = ys.len();
    let zero: Vec<DVector<f64>> = vec![DVector::zeros(model.observation.c.nrows()); n_t];
    let mut filtered_regimes = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let mut runs = enumerate(model, ys, &zero, t + 1);
        normalize(&mut runs);
        let mut p = vec![0.0; s];
        for (w, seq, _) in &runs {
            p[seq[t]] += w;
        }
        filtered_regimes.push(p);
    }
    let mut runs = enumerate(model, ys, &zero, n_t);
    let log_likelihood = normalize(&mut runs);
    let n = model.m0.len();
    let mut smoothed_regimes = vec![vec![0.0; s]; n_t];
    let mut means = vec![DVector::zeros(n); n_t];
    let mut second = vec![DMatrix::zeros(n, n); n_t];
    for (w, seq, run) in &runs {
        for t in 0..n_t {
            smoothed_regimes[t][seq[t]] += w;
            means[t] += &run.smoothed_means[t] * *w;
            second[t] += (&run.smoothed_covs[t] + &run.smoothed_means[t] * run.smoothed_means[t].transpose()) * *w;
        }
    }
    let covs = (0..n_t).map(|t| &second[t] - &means[t] * means[t].transpose()).collect();
    ExactPosterior {
        filtered_regimes,
        smoothed_regimes,
        smoothed_means: means,
        smoothed_covs: covs,
        log_likelihood,
    }
}
