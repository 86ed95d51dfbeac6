//! Brute-force reference algorithms for testing: truncated Taylor matrix
//! exponential, quadrature process noise, textbook Kalman/RTS, dense GP
//! regression and exhaustive switching-model enumeration.
//!
//! Everything here favours the most direct formula over speed or numerical
//! care, and shares no code with the library under test.

pub mod gp;
pub mod kalman;
pub mod matrix;
pub mod slds;
