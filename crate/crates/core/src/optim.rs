//! Bounded derivative-free maximisation (Nelder–Mead with projection onto a
//! box), single- and multi-start.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch("bounds".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "bounds".into(),
                reason: "each lower bound must be finite and below its upper bound".into(),
            });
        }
        Ok(Bounds { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Initial simplex edge as a fraction of each bound width.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter, relative to the bound widths, falls below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evaluations: 200,
            initial_step: 0.1,
            f_tol: 1e-9,
            x_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value seen after each evaluation (non-decreasing).
    pub trace: Vec<f64>,
    pub converged: bool,
}

struct Counter<'a, F> {
    f: &'a mut F,
    evals: usize,
    best: f64,
    best_x: Vec<f64>,
    trace: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counter<'_, F> {
    /// Returns the value to minimise.
    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        self.evals += 1;
        if v > self.best || self.best_x.is_empty() {
            if v > self.best {
                self.best = v;
            }
            self.best_x = x.to_vec();
        }
        self.trace.push(self.best);
        -v
    }
}

/// Maximises `f` over the box starting from `x0`.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<OptimResult> {
    let r = simplex_search(f, x0, bounds, opts)?;
    if r.value == f64::NEG_INFINITY {
        return Err(all_failed());
    }
    Ok(r)
}

fn simplex_search<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<OptimResult> {
    let n = bounds.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch("start point".into()));
    }
    let mut c = Counter {
        f,
        evals: 0,
        best: f64::NEG_INFINITY,
        best_x: Vec::new(),
        trace: Vec::new(),
    };
    let converged = run_simplex(&mut c, x0, bounds, opts);
    Ok(OptimResult {
        x: c.best_x,
        value: c.best,
        evaluations: c.evals,
        trace: c.trace,
        converged,
    })
}

fn all_failed() -> Error {
    Error::OptimizationFailure("every evaluation was -inf or NaN".into())
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    c: &mut Counter<'_, F>,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> bool {
    let n = bounds.dim();
    let budget = opts.max_evaluations.max(n + 1);
    let mut start = x0.to_vec();
    bounds.clamp(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = c.eval(&start);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        let mut p = start.clone();
        let h = opts.initial_step * bounds.width(i);
        p[i] = if p[i] + h <= bounds.upper[i] { p[i] + h } else { p[i] - h };
        bounds.clamp(&mut p);
        let v = c.eval(&p);
        simplex.push((p, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    loop {
        simplex.sort_by(cmp);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let f_spread = if best.is_finite() && worst.is_finite() {
            (worst - best).abs()
        } else {
            f64::INFINITY
        };
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .enumerate()
                    .map(|(i, (a, b))| ((a - b) / bounds.width(i)).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tol && diameter <= opts.x_tol.max(1e-12) {
            return true;
        }
        if diameter <= 1e-14 {
            return true;
        }
        if c.evals >= budget {
            return false;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(p, _)| p[i]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n)
                .map(|i| centroid[i] + coef * (simplex[n].0[i] - centroid[i]))
                .collect();
            bounds.clamp(&mut p);
            p
        };
        let xr = toward(-alpha);
        let fr = c.eval(&xr);
        if fr < simplex[0].1 {
            if c.evals >= budget {
                simplex[n] = (xr, fr);
                continue;
            }
            let xe = toward(-gamma);
            let fe = c.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if c.evals >= budget {
            return false;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let p = toward(-rho);
            let v = c.eval(&p);
            (p, v)
        } else {
            let p = toward(rho);
            let v = c.eval(&p);
            (p, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for k in 1..=n {
            if c.evals >= budget {
                return false;
            }
            let p: Vec<f64> = (0..n)
                .map(|i| x_best[i] + sigma * (simplex[k].0[i] - x_best[i]))
                .collect();
            let v = c.eval(&p);
            simplex[k] = (p, v);
        }
    }
}

/// Runs Nelder–Mead from each start in turn, sharing a total evaluation
/// budget. Every start gets an equal share of what is left when it begins.
pub fn multi_start_max<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    budget: usize,
    opts: &NelderMeadOptions,
) -> Result<OptimResult> {
    if starts.is_empty() {
        return Err(Error::OptimizationFailure("no start points".into()));
    }
    let mut best: Option<OptimResult> = None;
    let mut trace: Vec<f64> = Vec::with_capacity(budget);
    let mut used = 0usize;
    for (k, x0) in starts.iter().enumerate() {
        let remaining = budget.saturating_sub(used);
        if remaining <= bounds.dim() {
            break;
        }
        let share = remaining / (starts.len() - k);
        let run_opts = NelderMeadOptions {
            max_evaluations: share.max(bounds.dim() + 1),
            ..*opts
        };
        let r = simplex_search(f, x0, bounds, &run_opts)?;
        used += r.evaluations;
        let floor = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.extend(r.trace.iter().map(|v| v.max(floor)));
        if r.value > f64::NEG_INFINITY && best.as_ref().is_none_or(|b: &OptimResult| r.value > b.value) {
            best = Some(r);
        }
    }
    let mut b = best.ok_or_else(all_failed)?;
    b.evaluations = used;
    b.trace = trace;
    Ok(b)
}
