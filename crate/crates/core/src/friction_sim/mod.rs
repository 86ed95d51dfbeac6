//! Ground-truth stick-slip simulation: friction law, input generation,
//! event-driven integration, resampling and measurement noise.

mod dopri;
mod io;
mod law;
mod signal;
mod sim;

pub use dopri::{DenseStep, Dopri5, State, Tolerances};
pub use io::{
    add_noise_snr, read_trajectory_csv, resample_uniform, signal_power, write_trajectory_csv, SignalSpec,
};
pub use law::{dieterich_ruina, FrictionParams};
pub use signal::{
    jonswap_multisine, jonswap_spectrum, uniform_grid, InputSignal, JonswapParams, Multisine, SampledSignal,
};
pub use sim::{simulate_stick_slip, simulate_stick_slip_with, MotionRegime, SimOptions, Trajectory};
