//! Switching linear dynamical system: Markov regime prior, Kalman
//! primitives, mixture reduction and approximate inference.

pub mod inference;
pub mod kalman;
pub mod markov;
pub mod mixture;

pub use inference::{
    adf_filter, adf_log_likelihood, ec_smoother, infer, initial_regime_probs, regime_index, FilterOutput,
    InferenceConfig, RegimeSequenceEstimate, SmootherOutput,
};
pub use kalman::{
    kalman_predict, kalman_predict_with, kalman_update, kalman_update_with, rts_step, sticking_predict, Gaussian,
};
pub use markov::{markov_transition_matrix, MarkovSwitchModel};
pub use mixture::{collapse_mixture, moment_match, Component, GaussianMixtureBelief, RegimeBelief};
