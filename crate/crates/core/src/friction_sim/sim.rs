//! Event-driven stick-slip integration of
//! `m z̈ + c ż + k z + F_f = u_eff(t)`.

use log::warn;
use serde::{Deserialize, Serialize};

use super::dopri::{DenseStep, Dopri5, State, Tolerances};
use super::law::FrictionParams;
use super::signal::InputSignal;
use crate::error::{invalid, Error, Result};
use crate::ssm_builder::{ExcitationKind, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionRegime {
    Slip,
    Stick,
}

impl MotionRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionRegime::Slip => "slip",
            MotionRegime::Stick => "stick",
        }
    }
}

/// Sampled response. `u`/`udot` hold the applied force for direct forcing
/// or the base displacement/velocity for base motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub excitation: ExcitationKind,
    pub time: Vec<f64>,
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
    pub zddot: Vec<f64>,
    pub friction: Vec<f64>,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub regime: Vec<MotionRegime>,
}

impl Trajectory {
    pub fn empty(excitation: ExcitationKind) -> Self {
        Trajectory {
            excitation,
            time: Vec::new(),
            z: Vec::new(),
            zdot: Vec::new(),
            zddot: Vec::new(),
            friction: Vec::new(),
            u: Vec::new(),
            udot: Vec::new(),
            regime: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, t: f64, z: f64, zd: f64, zdd: f64, f: f64, u: f64, ud: f64, r: MotionRegime) {
        if let Some(&last) = self.time.last() {
            if t <= last + 1e-12 {
                return;
            }
        }
        self.time.push(t);
        self.z.push(z);
        self.zdot.push(zd);
        self.zddot.push(zdd);
        self.friction.push(f);
        self.u.push(u);
        self.udot.push(ud);
        self.regime.push(r);
    }

    /// `[start, end]` of every maximal run of stick-labelled samples.
    pub fn stick_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, r) in self.regime.iter().enumerate() {
            match (r, start) {
                (MotionRegime::Stick, None) => start = Some(i),
                (MotionRegime::Slip, Some(s)) => {
                    out.push((self.time[s], self.time[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((self.time[s], *self.time.last().expect("non-empty")));
        }
        out
    }

    pub fn stick_count(&self) -> usize {
        self.stick_intervals().len()
    }

    /// Effective applied force `u` or `k u + c u̇` at sample `i`.
    pub fn effective_input(&self, params: &SystemParams, i: usize) -> f64 {
        self.excitation.effective_force(params, &[self.u[i], self.udot[i]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Event location tolerance in seconds.
    pub event_tol: f64,
    /// Rate of the dense output samples (Hz); event instants are added.
    pub output_rate: f64,
    pub max_step: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            rtol: 1e-10,
            atol: 1e-10,
            event_tol: 1e-10,
            output_rate: 5_000.0,
            max_step: 0.01,
        }
    }
}

enum Phase {
    Stick { z: f64 },
    Slip { dir: f64 },
}

struct Model<'a> {
    sys: SystemParams,
    law: FrictionParams,
    input: &'a dyn InputSignal,
    excitation: ExcitationKind,
}

impl Model<'_> {
    /// `(u, u̇, u_eff)`
    fn drive(&self, t: f64) -> (f64, f64, f64) {
        let (u, ud) = self.input.value_and_derivative(t);
        (u, ud, self.excitation.effective_force(&self.sys, &[u, ud]))
    }

    fn sliding_accel(&self, t: f64, y: &State, dir: f64) -> (f64, f64) {
        self.sliding_accel_with(self.drive(t).2, y, dir)
    }

    fn sliding_accel_with(&self, ue: f64, y: &State, dir: f64) -> (f64, f64) {
        let f = dir * self.law.magnitude(y[1].abs());
        ((ue - self.sys.damping * y[1] - self.sys.stiffness * y[0] - f) / self.sys.mass, f)
    }
}

/// Simulates from rest with default solver options.
pub fn simulate_stick_slip(
    sys: &SystemParams,
    law: &FrictionParams,
    input: &dyn InputSignal,
    t_f: f64,
    excitation: ExcitationKind,
) -> Result<Trajectory> {
    simulate_stick_slip_with(sys, law, input, t_f, excitation, &SimOptions::default())
}

pub fn simulate_stick_slip_with(
    sys: &SystemParams,
    law: &FrictionParams,
    input: &dyn InputSignal,
    t_f: f64,
    excitation: ExcitationKind,
    opts: &SimOptions,
) -> Result<Trajectory> {
    sys.validate()?;
    law.validate()?;
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(invalid("t_f", format!("must be > 0, got {t_f}")));
    }
    if !(opts.output_rate > 0.0) || !(opts.event_tol > 0.0) || !(opts.max_step > 0.0) {
        return Err(invalid("sim_options", "rates and tolerances must be positive"));
    }
    let model = Model {
        sys: *sys,
        law: *law,
        input,
        excitation,
    };
    let f_static = law.static_force();
    let k = sys.stiffness;
    let grid_dt = 1.0 / opts.output_rate;
    let mut traj = Trajectory::empty(excitation);

    let net = |t: f64, z: f64| model.drive(t).2 - k * z;
    let mut t = 0.0;
    let mut phase = {
        let n0 = net(0.0, 0.0);
        if n0.abs() <= f_static {
            Phase::Stick { z: 0.0 }
        } else {
            Phase::Slip { dir: n0.signum() }
        }
    };
    let mut z_start = 0.0;
    let mut degenerate = 0usize;

    while t < t_f {
        let phase_start = t;
        match phase {
            Phase::Stick { z } => {
                let emit = |traj: &mut Trajectory, s: f64| {
                    let (u, ud, ue) = model.drive(s);
                    traj.push(s, z, 0.0, 0.0, ue - k * z, u, ud, MotionRegime::Stick);
                };
                emit(&mut traj, t);
                let exceeds = |s: f64| net(s, z).abs() > f_static;
                let h_scan = 0.5 * grid_dt;
                let mut left = t;
                let mut exit = None;
                loop {
                    let right = (left + h_scan).min(t_f);
                    if exceeds(right) {
                        let (mut a, mut b) = (left, right);
                        while b - a > opts.event_tol {
                            let m = 0.5 * (a + b);
                            if exceeds(m) {
                                b = m;
                            } else {
                                a = m;
                            }
                        }
                        exit = Some(b);
                        break;
                    }
                    if right >= t_f {
                        break;
                    }
                    left = right;
                }
                let end = exit.unwrap_or(t_f);
                emit_grid(&mut traj, t, end, grid_dt, |s, tr| emit(tr, s));
                match exit {
                    Some(te) => {
                        phase = Phase::Slip { dir: net(te, z).signum() };
                        z_start = z;
                        t = te;
                    }
                    None => {
                        emit(&mut traj, t_f);
                        t = t_f;
                    }
                }
            }
            Phase::Slip { dir } => {
                let rhs = |s: f64, y: &State| [y[1], model.sliding_accel(s, y, dir).0];
                let tol = Tolerances {
                    rtol: opts.rtol,
                    atol: opts.atol,
                };
                let mut solver = Dopri5::new(rhs, t, [z_start, 0.0], tol, opts.max_step);
                let emit = |traj: &mut Trajectory, s: f64, y: State| {
                    let (u, ud, ue) = model.drive(s);
                    let (a, f) = model.sliding_accel_with(ue, &y, dir);
                    traj.push(s, y[0], y[1], a, f, u, ud, MotionRegime::Slip);
                };
                emit(&mut traj, t, [z_start, 0.0]);
                let mut event: Option<(f64, f64)> = None;
                while solver.t < t_f {
                    let step = solver.step(t_f)?;
                    let e1 = dir * step.eval(step.t1())[1];
                    if e1 <= 0.0 {
                        let te = locate_reversal(&step, dir, opts.event_tol);
                        emit_grid(&mut traj, step.t0, te, grid_dt, |s, tr| emit(tr, s, step.eval(s)));
                        event = Some((te, step.eval(te)[0]));
                        break;
                    }
                    emit_grid(&mut traj, step.t0, step.t1(), grid_dt, |s, tr| emit(tr, s, step.eval(s)));
                }
                match event {
                    Some((te, ze)) => {
                        let n = net(te, ze);
                        phase = if n.abs() <= f_static {
                            Phase::Stick { z: ze }
                        } else {
                            Phase::Slip { dir: n.signum() }
                        };
                        z_start = ze;
                        t = te;
                    }
                    None => {
                        emit(&mut traj, t_f, solver.y);
                        t = t_f;
                    }
                }
            }
        }
        if t - phase_start <= 1e-12 && t < t_f {
            degenerate += 1;
            if degenerate > 100 {
                warn!("stick-slip switching stalled at t = {t}");
                return Err(Error::StepSizeUnderflow { t });
            }
        } else {
            degenerate = 0;
        }
    }
    Ok(traj)
}

/// Emits output-grid samples strictly inside `(t0, t1)`.
fn emit_grid<F: FnMut(f64, &mut Trajectory)>(traj: &mut Trajectory, t0: f64, t1: f64, dt: f64, mut f: F) {
    let mut i = (t0 / dt).floor() as i64 + 1;
    loop {
        let s = i as f64 * dt;
        if s >= t1 {
            break;
        }
        if s > t0 {
            f(s, traj);
        }
        i += 1;
    }
}

/// Time in `(t0, t1]` at which `dir·ż` first reaches zero on the dense output.
fn locate_reversal(step: &DenseStep, dir: f64, tol: f64) -> f64 {
    let e = |s: f64| dir * step.eval(s)[1];
    let (t0, t1) = (step.t0, step.t1());
    // A phase starts at ż = 0; find a positive interior point first.
    let mut left = t0;
    if e(t0) <= 0.0 {
        let mut found = false;
        let mut s = t1;
        for _ in 0..60 {
            s = t0 + 0.5 * (s - t0);
            if e(s) > 0.0 {
                left = s;
                found = true;
                break;
            }
        }
        if !found {
            return t0;
        }
    }
    let (mut a, mut b) = (left, t1);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if e(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    b
}
