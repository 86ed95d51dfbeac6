use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Markov chain over regimes where the last regime is the one-step reset.
///
/// A non-reset regime persists with probability ρ and otherwise jumps to the
/// reset; the reset always leaves, to any other regime with equal probability.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSwitchModel {
    pub persistence: f64,
    pub transition: DMatrix<f64>,
}

impl MarkovSwitchModel {
    pub fn regime_count(&self) -> usize {
        self.transition.nrows()
    }

    /// `P(s_t = to | s_{t−1} = from)`
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[(from, to)]
    }
}

pub fn markov_transition_matrix(regimes: usize, persistence: f64) -> Result<MarkovSwitchModel> {
    if regimes == 0 {
        return Err(invalid("regimes", "must be >= 1"));
    }
    if regimes == 1 {
        return Ok(MarkovSwitchModel {
            persistence,
            transition: DMatrix::from_element(1, 1, 1.0),
        });
    }
    if !(persistence > 0.0 && persistence < 1.0) {
        return Err(invalid(
            "persistence",
            format!("must lie in (0, 1), got {persistence}"),
        ));
    }
    let reset = regimes - 1;
    let mut t = DMatrix::zeros(regimes, regimes);
    for s in 0..reset {
        t[(s, s)] = persistence;
        t[(s, reset)] = 1.0 - persistence;
        t[(reset, s)] = 1.0 / reset as f64;
    }
    Ok(MarkovSwitchModel {
        persistence,
        transition: t,
    })
}
