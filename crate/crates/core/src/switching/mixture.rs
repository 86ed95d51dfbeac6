//! Weighted Gaussian mixtures and the per-regime beliefs built from them.

use nalgebra::{DMatrix, DVector};

use super::kalman::Gaussian;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Component {
    pub fn gaussian(&self) -> Gaussian {
        Gaussian::new(self.mean.clone(), self.cov.clone())
    }
}

/// Moment-matched single Gaussian of a weighted set (weights need not sum to one).
pub fn moment_match(components: &[Component]) -> Result<Component> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroWeight);
    }
    let n = components[0].mean.len();
    let mut mean = DVector::zeros(n);
    for c in components {
        mean += &c.mean * (c.weight / total);
    }
    let mut cov = DMatrix::zeros(n, n);
    for c in components {
        let d = &c.mean - &mean;
        cov += (&c.cov + &d * d.transpose()) * (c.weight / total);
    }
    symmetrize(&mut cov);
    Ok(Component {
        weight: total,
        mean,
        cov,
    })
}

/// Reduces a mixture to at most `target` components.
///
/// The `target − 1` heaviest components are kept and the rest are merged into
/// one moment-matched component, so the total weight and the mixture mean and
/// covariance are preserved.
pub fn collapse_mixture(mut components: Vec<Component>, target: usize) -> Result<Vec<Component>> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.is_empty() || !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroWeight);
    }
    let target = target.max(1);
    if components.len() <= target {
        return Ok(components);
    }
    // Stable sort keeps ties in their original order.
    components.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let rest = components.split_off(target - 1);
    let merged = moment_match(&rest)?;
    components.push(merged);
    Ok(components)
}

/// Mixture belief of the state given one regime, with that regime's probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeBelief {
    pub prob: f64,
    /// Component weights sum to one (empty when `prob` is zero).
    pub components: Vec<Component>,
}

/// Belief over regimes and states at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureBelief {
    pub regimes: Vec<RegimeBelief>,
}

impl GaussianMixtureBelief {
    pub fn regime_probs(&self) -> Vec<f64> {
        self.regimes.iter().map(|r| r.prob).collect()
    }

    /// Moment-matched Gaussian of the whole state belief.
    pub fn moments(&self) -> Gaussian {
        let all: Vec<Component> = self
            .regimes
            .iter()
            .flat_map(|r| {
                r.components.iter().map(move |c| Component {
                    weight: r.prob * c.weight,
                    mean: c.mean.clone(),
                    cov: c.cov.clone(),
                })
            })
            .filter(|c| c.weight > 0.0)
            .collect();
        moment_match(&all).map(|c| c.gaussian()).expect("normalized belief")
    }

    /// Moment-matched state belief given a single regime.
    pub fn regime_moments(&self, regime: usize) -> Option<Gaussian> {
        let r = &self.regimes[regime];
        if r.components.is_empty() {
            return None;
        }
        moment_match(&r.components).ok().map(|c| c.gaussian())
    }

    pub fn total_weight(&self) -> f64 {
        self.regimes
            .iter()
            .map(|r| r.prob * r.components.iter().map(|c| c.weight).sum::<f64>())
            .sum()
    }

    /// Checks the normalisation invariants; used in debug builds.
    pub fn check_normalized(&self, tol: f64) -> bool {
        let regime_sum: f64 = self.regimes.iter().map(|r| r.prob).sum();
        if (regime_sum - 1.0).abs() > tol {
            return false;
        }
        self.regimes.iter().all(|r| {
            r.components.is_empty() && r.prob == 0.0
                || (r.components.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn comp(w: f64, m: f64, v: f64) -> Component {
        Component {
            weight: w,
            mean: DVector::from_element(1, m),
            cov: DMatrix::from_element(1, 1, v),
        }
    }

    #[test]
    fn identity_when_under_target() {
        let cs = vec![comp(0.3, 1.0, 1.0), comp(0.7, -1.0, 2.0)];
        assert_eq!(collapse_mixture(cs.clone(), 2).unwrap(), cs);
        assert_eq!(collapse_mixture(cs.clone(), 5).unwrap(), cs);
    }

    #[test]
    fn symmetric_pair_to_one() {
        let out = collapse_mixture(vec![comp(0.5, -1.0, 1.0), comp(0.5, 1.0, 1.0)], 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out[0].mean[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(out[0].cov[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(out[0].weight, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_weight_is_an_error() {
        assert_eq!(collapse_mixture(vec![comp(0.0, 1.0, 1.0)], 1), Err(Error::ZeroWeight));
        assert_eq!(collapse_mixture(vec![], 1), Err(Error::ZeroWeight));
    }
}
