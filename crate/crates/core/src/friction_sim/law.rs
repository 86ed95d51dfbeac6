use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Steady-state Dieterich–Ruina friction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    pub f_star: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v_star: f64,
    pub epsilon: f64,
}

impl FrictionParams {
    pub fn new(f_star: f64, a: f64, b: f64, c: f64, v_star: f64, epsilon: f64) -> Result<Self> {
        let p = FrictionParams {
            f_star,
            a,
            b,
            c,
            v_star,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    /// F* = 1, a = 0.07, b = 0.09, c = 0.022, V* = 0.003 m/s, ε = 1e-6 m/s.
    pub fn reference() -> Self {
        FrictionParams {
            f_star: 1.0,
            a: 0.07,
            b: 0.09,
            c: 0.022,
            v_star: 0.003,
            epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f_star", self.f_star),
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if !(self.v_star > 0.0 && self.v_star.is_finite()) {
            return Err(invalid("v_star", format!("must be > 0, got {}", self.v_star)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        // c + V*/(|v|+ε) decreases to c as |v| grows.
        if self.c < 0.0 {
            return Err(invalid("c", format!("c + V*/(|v|+ε) turns negative for large |v| when c = {}", self.c)));
        }
        Ok(())
    }

    /// Friction magnitude at sliding speed `speed ≥ 0`.
    pub fn magnitude(&self, speed: f64) -> f64 {
        let s = speed.abs() + self.epsilon;
        self.f_star + self.a * (s / self.v_star).ln() + self.b * (self.c + self.v_star / s).ln()
    }

    /// Breakaway force: the `v → 0⁺` limit of the sliding law.
    pub fn static_force(&self) -> f64 {
        self.magnitude(0.0)
    }

    /// `dF/d|v|` of [`Self::magnitude`].
    pub fn magnitude_slope(&self, speed: f64) -> f64 {
        let s = speed.abs() + self.epsilon;
        self.a / s - self.b * self.v_star / (s * s * (self.c + self.v_star / s))
    }
}

/// Sliding friction `[F* + a ln((|v|+ε)/V*) + b ln(c + V*/(|v|+ε))]·sgn(v)`.
///
/// `v = 0` returns 0: the sticking branch is resolved by the integrator.
pub fn dieterich_ruina(v: f64, p: &FrictionParams) -> Result<f64> {
    p.validate()?;
    let arg = p.c + p.v_star / (v.abs() + p.epsilon);
    if !(arg > 0.0) {
        return Err(invalid("c", format!("log argument {arg} is not positive at v = {v}")));
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    Ok(p.magnitude(v) * v.signum())
}
