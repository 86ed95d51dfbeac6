//! Assumed-density filtering and expectation-correction smoothing for the
//! switching latent force model.
//!
//! Filtering keeps, for every regime, a mixture of at most `I` Gaussians. One
//! step expands each component through every regime transition (`I·S²`
//! Kalman filters), weights the branches by their observation evidence and
//! the Markov prior, then collapses each regime back to `I` components.
//!
//! Smoothing runs backwards. For every filtered component `(i, s_t)`, next
//! regime `s_{t+1}` and smoothed component `j` at `t+1` it performs an RTS
//! step (`I·J·S²` per time step). The backward responsibility
//! `p(i, s_t | j, s_{t+1}, y_{1:T})` is the filtered responsibility
//! `p(i, s_t | x_{t+1}, s_{t+1}, y_{1:t})` averaged over the smoothed
//! component at `t+1`, approximated by the ratio of the Gaussian averages of
//! its numerator: `N(g_j; μ⁻, P⁻ + G_j)`. No further correction is applied.

use nalgebra::{DMatrix, DVector};

use super::kalman::{kalman_predict_with, kalman_update_with, sticking_predict, Gaussian};
use super::markov::MarkovSwitchModel;
use super::mixture::{collapse_mixture, Component, GaussianMixtureBelief, RegimeBelief};
use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_log_density, log_sum_exp, right_solve_spd, symmetrize};
use crate::ssm_builder::{RegimeKind, RegimeModel, RegimeModelSet};

/// Number of mixture components kept per regime by the filter (`I`) and the
/// smoother (`J ≤ I`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub filter_components: usize,
    pub smoother_components: usize,
}

impl InferenceConfig {
    pub fn new(filter_components: usize, smoother_components: usize) -> Result<Self> {
        if filter_components == 0 {
            return Err(invalid("filter_components", "must be >= 1"));
        }
        if smoother_components == 0 || smoother_components > filter_components {
            return Err(invalid(
                "smoother_components",
                format!("must lie in [1, {filter_components}], got {smoother_components}"),
            ));
        }
        Ok(InferenceConfig {
            filter_components,
            smoother_components,
        })
    }
}

/// Regime marginals per time step and the most probable regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSequenceEstimate {
    pub probs: Vec<Vec<f64>>,
    pub map: Vec<usize>,
}

impl RegimeSequenceEstimate {
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Self {
        let map = probs
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = i;
                    }
                }
                best
            })
            .collect();
        RegimeSequenceEstimate { probs, map }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub beliefs: Vec<GaussianMixtureBelief>,
    pub regimes: RegimeSequenceEstimate,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub beliefs: Vec<GaussianMixtureBelief>,
    pub regimes: RegimeSequenceEstimate,
}

/// Per-regime one-step dynamics with the input terms precomputed.
struct Dynamics<'a> {
    set: &'a RegimeModelSet,
    inputs: &'a [DVector<f64>],
    /// `B u_t` per regime (empty for the sticking regime).
    bu: Vec<Vec<DVector<f64>>>,
    /// `D u_t`
    du: Vec<DVector<f64>>,
}

impl<'a> Dynamics<'a> {
    fn new(set: &'a RegimeModelSet, inputs: &'a [DVector<f64>], observations: &[DVector<f64>]) -> Result<Self> {
        if inputs.len() != observations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs for {} observations",
                inputs.len(),
                observations.len()
            )));
        }
        let n = set.state_dim();
        let obs = set.regimes[0].observation();
        let n_u = obs.d.ncols();
        if inputs.iter().any(|u| u.len() != n_u) {
            return Err(Error::DimensionMismatch(format!("inputs must have {n_u} channels")));
        }
        if observations.iter().any(|y| y.len() != obs.c.nrows()) {
            return Err(Error::DimensionMismatch("observation dimension".into()));
        }
        let bu = set
            .regimes
            .iter()
            .map(|r| match r {
                RegimeModel::Sliding(m) | RegimeModel::Resetting(m) => inputs
                    .iter()
                    .map(|u| {
                        if m.transition.b.ncols() == 0 {
                            DVector::zeros(n)
                        } else {
                            &m.transition.b * u
                        }
                    })
                    .collect(),
                RegimeModel::Sticking(_) => Vec::new(),
            })
            .collect();
        let du = inputs
            .iter()
            .map(|u| if n_u == 0 { DVector::zeros(obs.c.nrows()) } else { &obs.d * u })
            .collect();
        Ok(Dynamics { set, inputs, bu, du })
    }

    /// Predicts `x_{t}` from a belief at `t−1` under regime `s`.
    fn predict(&self, s: usize, t_prev: usize, g: &Gaussian) -> Gaussian {
        match &self.set.regimes[s] {
            RegimeModel::Sliding(m) | RegimeModel::Resetting(m) => {
                kalman_predict_with(&m.transition, g, &self.bu[s][t_prev])
            }
            RegimeModel::Sticking(st) => {
                sticking_predict(g, self.inputs[t_prev].as_slice(), &st.params, st.excitation)
            }
        }
    }

    /// `Cov(x_{t−1}, x_t)` for the prediction made by [`Self::predict`].
    ///
    /// The sticking predictor carries the covariance over unchanged, which is
    /// the covariance structure of a deterministic mean shift, so its
    /// cross-covariance is the prior covariance itself.
    fn cross(&self, s: usize, g: &Gaussian) -> DMatrix<f64> {
        match &self.set.regimes[s] {
            RegimeModel::Sliding(m) | RegimeModel::Resetting(m) => &g.cov * m.transition.a.transpose(),
            RegimeModel::Sticking(_) => g.cov.clone(),
        }
    }

    fn update(&self, t: usize, pred: &Gaussian, y: &DVector<f64>) -> Result<(Gaussian, f64)> {
        kalman_update_with(self.set.regimes[0].observation(), pred, &self.du[t], y)
    }
}

/// Initial regime probabilities: uniform over the non-resetting regimes.
pub fn initial_regime_probs(set: &RegimeModelSet) -> Vec<f64> {
    let s = set.len();
    let active = if set.has_reset() && s > 1 { s - 1 } else { s };
    (0..s).map(|i| if i < active { 1.0 / active as f64 } else { 0.0 }).collect()
}

fn check_switch(set: &RegimeModelSet, switch: &MarkovSwitchModel) -> Result<()> {
    if switch.regime_count() != set.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} regimes but a {}-state Markov chain",
            set.len(),
            switch.regime_count()
        )));
    }
    Ok(())
}

fn failure(step: usize, err: Error) -> Error {
    match err {
        Error::InferenceFailure { .. } => err,
        other => Error::InferenceFailure {
            step,
            reason: other.to_string(),
        },
    }
}

struct AdfRun {
    beliefs: Vec<GaussianMixtureBelief>,
    log_likelihood: f64,
}

fn run_adf(
    set: &RegimeModelSet,
    switch: &MarkovSwitchModel,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    cfg: &InferenceConfig,
    keep_history: bool,
) -> Result<AdfRun> {
    check_switch(set, switch)?;
    let dyn_ = Dynamics::new(set, inputs, observations)?;
    let n_t = observations.len();
    if n_t == 0 {
        return Err(invalid("observations", "series is empty"));
    }
    let s_count = set.len();
    let log_pi: Vec<Vec<f64>> = (0..s_count)
        .map(|a| (0..s_count).map(|b| switch.prob(a, b).ln()).collect())
        .collect();

    let prior = Gaussian::new(set.prior_mean.clone(), set.prior_cov.clone());
    let (post0, ll0) = dyn_.update(0, &prior, &observations[0]).map_err(|e| failure(0, e))?;
    let init = initial_regime_probs(set);
    let mut current = GaussianMixtureBelief {
        regimes: init
            .iter()
            .map(|&p| RegimeBelief {
                prob: p,
                components: if p > 0.0 {
                    vec![Component {
                        weight: 1.0,
                        mean: post0.mean.clone(),
                        cov: post0.cov.clone(),
                    }]
                } else {
                    Vec::new()
                },
            })
            .collect(),
    };
    if !ll0.is_finite() {
        return Err(failure(0, Error::InferenceFailure { step: 0, reason: "non-finite evidence".into() }));
    }
    let mut log_likelihood = ll0;
    let mut history = Vec::with_capacity(if keep_history { n_t } else { 0 });

    for t in 1..n_t {
        let y = &observations[t];
        let mut cands: Vec<Vec<(f64, Gaussian)>> = Vec::with_capacity(s_count);
        let mut log_mass = vec![f64::NEG_INFINITY; s_count];
        for s_next in 0..s_count {
            let mut branch = Vec::new();
            for (s_prev, rb) in current.regimes.iter().enumerate() {
                let lp = log_pi[s_prev][s_next];
                if rb.prob <= 0.0 || lp == f64::NEG_INFINITY {
                    continue;
                }
                let log_prior = rb.prob.ln() + lp;
                for comp in &rb.components {
                    if comp.weight <= 0.0 {
                        continue;
                    }
                    let pred = dyn_.predict(s_next, t - 1, &comp.gaussian());
                    let (post, lev) = dyn_.update(t, &pred, y).map_err(|e| failure(t, e))?;
                    branch.push((lev + log_prior + comp.weight.ln(), post));
                }
            }
            log_mass[s_next] = log_sum_exp(branch.iter().map(|(lw, _)| *lw));
            cands.push(branch);
        }
        let log_z = log_sum_exp(log_mass.iter().cloned());
        if !log_z.is_finite() {
            return Err(Error::InferenceFailure {
                step: t,
                reason: "all branch weights vanished or are non-finite".into(),
            });
        }
        log_likelihood += log_z;
        if keep_history {
            history.push(current);
        }
        let mut regimes = Vec::with_capacity(s_count);
        for (s_next, branch) in cands.into_iter().enumerate() {
            let prob = (log_mass[s_next] - log_z).exp();
            if !(prob > 0.0) || branch.is_empty() {
                regimes.push(RegimeBelief {
                    prob: 0.0,
                    components: Vec::new(),
                });
                continue;
            }
            let comps: Vec<Component> = branch
                .into_iter()
                .map(|(lw, g)| Component {
                    weight: (lw - log_mass[s_next]).exp(),
                    mean: g.mean,
                    cov: g.cov,
                })
                .filter(|c| c.weight > 0.0)
                .collect();
            let components = collapse_mixture(comps, cfg.filter_components).map_err(|e| failure(t, e))?;
            regimes.push(RegimeBelief { prob, components });
        }
        current = GaussianMixtureBelief { regimes };
        renormalize(&mut current);
        debug_assert!(current.check_normalized(1e-10), "filter step {t} not normalized");
    }
    history.push(current);
    Ok(AdfRun {
        beliefs: history,
        log_likelihood,
    })
}

fn renormalize(b: &mut GaussianMixtureBelief) {
    let total: f64 = b.regimes.iter().map(|r| r.prob).sum();
    for r in &mut b.regimes {
        r.prob /= total;
        let w: f64 = r.components.iter().map(|c| c.weight).sum();
        if w > 0.0 {
            for c in &mut r.components {
                c.weight /= w;
            }
        }
    }
}

/// Assumed-density filter; returns the filtered beliefs, filtered regime
/// marginals and `log p(y_{1:T})`.
pub fn adf_filter(
    set: &RegimeModelSet,
    switch: &MarkovSwitchModel,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    cfg: &InferenceConfig,
) -> Result<FilterOutput> {
    let run = run_adf(set, switch, inputs, observations, cfg, true)?;
    let probs = run.beliefs.iter().map(|b| b.regime_probs()).collect();
    Ok(FilterOutput {
        beliefs: run.beliefs,
        regimes: RegimeSequenceEstimate::from_probs(probs),
        log_likelihood: run.log_likelihood,
    })
}

/// Marginal log-likelihood only, without keeping the belief history.
pub fn adf_log_likelihood(
    set: &RegimeModelSet,
    switch: &MarkovSwitchModel,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    cfg: &InferenceConfig,
) -> Result<f64> {
    run_adf(set, switch, inputs, observations, cfg, false).map(|r| r.log_likelihood)
}

/// Expectation-correction smoother over the output of [`adf_filter`].
pub fn ec_smoother(
    filtered: &FilterOutput,
    set: &RegimeModelSet,
    switch: &MarkovSwitchModel,
    inputs: &[DVector<f64>],
    cfg: &InferenceConfig,
) -> Result<SmootherOutput> {
    check_switch(set, switch)?;
    let n_t = filtered.beliefs.len();
    if inputs.len() != n_t {
        return Err(Error::DimensionMismatch("smoother inputs".into()));
    }
    // Observations are not needed backwards; pass placeholders of the right size.
    let n_y = set.regimes[0].observation().c.nrows();
    let dummy_obs = vec![DVector::zeros(n_y); n_t];
    let dyn_ = Dynamics::new(set, inputs, &dummy_obs)?;
    let s_count = set.len();

    let mut out: Vec<GaussianMixtureBelief> = Vec::with_capacity(n_t);
    let mut last = filtered.beliefs[n_t - 1].clone();
    for r in &mut last.regimes {
        if !r.components.is_empty() {
            r.components =
                collapse_mixture(std::mem::take(&mut r.components), cfg.smoother_components).map_err(|e| failure(n_t - 1, e))?;
        }
    }
    out.push(last);

    for t in (0..n_t.saturating_sub(1)).rev() {
        let filt = &filtered.beliefs[t];
        let next = out.last().expect("smoothed t+1");
        let mut per_regime: Vec<Vec<Component>> = vec![Vec::new(); s_count];
        for (s_next, nb) in next.regimes.iter().enumerate() {
            if nb.prob <= 0.0 {
                continue;
            }
            // Filtered components able to reach s_next, with their predictions.
            struct Branch {
                s: usize,
                log_prior: f64,
                filt: Gaussian,
                pred: Gaussian,
                gain: DMatrix<f64>,
            }
            let mut branches = Vec::new();
            for (s, rb) in filt.regimes.iter().enumerate() {
                let pi = switch.prob(s, s_next);
                if rb.prob <= 0.0 || pi <= 0.0 {
                    continue;
                }
                for comp in &rb.components {
                    if comp.weight <= 0.0 {
                        continue;
                    }
                    let g = comp.gaussian();
                    let pred = dyn_.predict(s_next, t, &g);
                    let cross = dyn_.cross(s_next, &g);
                    let gain = right_solve_spd(&cross, &pred.cov).map_err(|e| failure(t, e))?;
                    branches.push(Branch {
                        s,
                        log_prior: rb.prob.ln() + pi.ln() + comp.weight.ln(),
                        filt: g,
                        pred,
                        gain,
                    });
                }
            }
            if branches.is_empty() {
                return Err(Error::InferenceFailure {
                    step: t,
                    reason: format!("smoothed regime {s_next} is unreachable from the filtered belief"),
                });
            }
            for jc in &nb.components {
                let mut log_resp = Vec::with_capacity(branches.len());
                for b in &branches {
                    let mut cov = &b.pred.cov + &jc.cov;
                    symmetrize(&mut cov);
                    let lp = gaussian_log_density(&(&jc.mean - &b.pred.mean), &cov).map_err(|e| failure(t, e))?;
                    log_resp.push(lp + b.log_prior);
                }
                let norm = log_sum_exp(log_resp.iter().cloned());
                if !norm.is_finite() {
                    return Err(Error::InferenceFailure {
                        step: t,
                        reason: "backward responsibilities vanished".into(),
                    });
                }
                for (b, lr) in branches.iter().zip(&log_resp) {
                    let weight = nb.prob * jc.weight * (lr - norm).exp();
                    if !(weight > 0.0) {
                        continue;
                    }
                    let mean = &b.filt.mean + &b.gain * (&jc.mean - &b.pred.mean);
                    let mut cov = &b.filt.cov + &b.gain * (&jc.cov - &b.pred.cov) * b.gain.transpose();
                    symmetrize(&mut cov);
                    per_regime[b.s].push(Component { weight, mean, cov });
                }
            }
        }
        let total: f64 = per_regime.iter().flatten().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InferenceFailure {
                step: t,
                reason: "smoothed weights vanished".into(),
            });
        }
        let mut regimes = Vec::with_capacity(s_count);
        for comps in per_regime {
            let mass: f64 = comps.iter().map(|c| c.weight).sum();
            if !(mass > 0.0) {
                regimes.push(RegimeBelief {
                    prob: 0.0,
                    components: Vec::new(),
                });
                continue;
            }
            let comps = comps
                .into_iter()
                .map(|mut c| {
                    c.weight /= mass;
                    c
                })
                .collect();
            let components = collapse_mixture(comps, cfg.smoother_components).map_err(|e| failure(t, e))?;
            regimes.push(RegimeBelief {
                prob: mass / total,
                components,
            });
        }
        let mut belief = GaussianMixtureBelief { regimes };
        renormalize(&mut belief);
        debug_assert!(belief.check_normalized(1e-10), "smoother step {t} not normalized");
        out.push(belief);
    }
    out.reverse();
    let probs = out.iter().map(|b| b.regime_probs()).collect();
    Ok(SmootherOutput {
        beliefs: out,
        regimes: RegimeSequenceEstimate::from_probs(probs),
    })
}

/// Filter and smoother in one call.
pub fn infer(
    set: &RegimeModelSet,
    switch: &MarkovSwitchModel,
    inputs: &[DVector<f64>],
    observations: &[DVector<f64>],
    cfg: &InferenceConfig,
) -> Result<(FilterOutput, SmootherOutput)> {
    let f = adf_filter(set, switch, inputs, observations, cfg)?;
    let s = ec_smoother(&f, set, switch, inputs, cfg)?;
    Ok((f, s))
}

/// Index of the first regime of the given kind, if any.
pub fn regime_index(set: &RegimeModelSet, kind: RegimeKind) -> Option<usize> {
    set.regimes.iter().position(|r| r.kind() == kind)
}
