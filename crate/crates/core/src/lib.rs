//! Identification of discontinuous friction forces in single-degree-of-freedom
//! oscillators with a switching Gaussian-process latent force model.
//!
//! The crate is organised bottom-up:
//!
//! * [`gp_ssm`]: temporal GP priors as linear SDEs.
//! * [`ssm_builder`]: augmented oscillator models, exact discretisation, the
//!   sliding / sticking / resetting regime set.
//! * [`switching`]: Markov switching prior, assumed-density filtering and
//!   expectation-correction smoothing.
//! * [`hyper_opt`]: MAP estimation of kernel and noise hyperparameters.
//! * [`friction_sim`]: stick-slip ground-truth simulator.
//! * [`post_id`]: error metrics, parameter correction, friction-law fitting.

pub mod error;
pub mod friction_sim;
pub mod gp_ssm;
pub mod hyper_opt;
pub mod linalg;
pub mod optim;
pub mod post_id;
pub mod ssm_builder;
pub mod switching;

pub use error::{Error, Result};
