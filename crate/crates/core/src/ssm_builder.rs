//! Assembly of the augmented (system ⊕ latent force) state-space models and
//! their exact discretisation.
//!
//! State layout is always `[z, ż, f, ḟ, …]`: displacement, velocity, then the
//! β states of the latent force.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp_ssm::{matern_half_to_ssm, KernelSpec, LatentForceSSM};
use crate::linalg::{expm, max_real_eigenvalue, repair_psd, solve_continuous_lyapunov, symmetrized};

/// Mass, viscous damping and stiffness of the oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// kg
    pub mass: f64,
    /// N·s/m
    pub damping: f64,
    /// N/m
    pub stiffness: f64,
}

impl SystemParams {
    pub fn new(mass: f64, damping: f64, stiffness: f64) -> Result<Self> {
        let p = SystemParams {
            mass,
            damping,
            stiffness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(invalid("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.stiffness.is_finite() && self.stiffness > 0.0) {
            return Err(invalid("stiffness", format!("must be > 0, got {}", self.stiffness)));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(invalid("damping", format!("must be >= 0, got {}", self.damping)));
        }
        Ok(())
    }
}

/// How the known excitation enters the equation of motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationKind {
    /// A force `u(t)` applied directly to the mass; one input channel.
    DirectForce,
    /// Base displacement `u(t)` and velocity `u̇(t)`; two input channels and
    /// the equation of motion is driven by `k u + c u̇`.
    BaseMotion,
}

impl ExcitationKind {
    pub fn input_dim(self) -> usize {
        match self {
            ExcitationKind::DirectForce => 1,
            ExcitationKind::BaseMotion => 2,
        }
    }

    /// Force acting on the mass produced by the input sample.
    pub fn effective_force(self, params: &SystemParams, input: &[f64]) -> f64 {
        match self {
            ExcitationKind::DirectForce => input[0],
            ExcitationKind::BaseMotion => params.stiffness * input[0] + params.damping * input[1],
        }
    }
}

/// Which response quantity the sensor measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationKind {
    Displacement,
    Acceleration,
}

/// `y = C x + D u + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ObservationModel {
    /// Scalar sensor on an oscillator with a latent force of dimension `beta`.
    pub fn for_sensor(
        kind: ObservationKind,
        params: &SystemParams,
        excitation: ExcitationKind,
        beta: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(invalid(
                "noise_variance",
                format!("must be > 0, got {noise_variance}"),
            ));
        }
        let n = 2 + beta;
        let n_u = excitation.input_dim();
        let mut c = DMatrix::zeros(1, n);
        let mut d = DMatrix::zeros(1, n_u);
        match kind {
            ObservationKind::Displacement => c[(0, 0)] = 1.0,
            ObservationKind::Acceleration => {
                let m = params.mass;
                c[(0, 0)] = -params.stiffness / m;
                c[(0, 1)] = -params.damping / m;
                c[(0, 2)] = -1.0 / m;
                match excitation {
                    ExcitationKind::DirectForce => d[(0, 0)] = 1.0 / m,
                    ExcitationKind::BaseMotion => {
                        d[(0, 0)] = params.stiffness / m;
                        d[(0, 1)] = params.damping / m;
                    }
                }
            }
        }
        Ok(ObservationModel {
            c,
            d,
            r: DMatrix::from_element(1, 1, noise_variance),
        })
    }

    /// Direct noisy observation of the first state (used for pure GP regression).
    pub fn first_state(n: usize, n_u: usize, noise_variance: f64) -> Self {
        let mut c = DMatrix::zeros(1, n);
        c[(0, 0)] = 1.0;
        ObservationModel {
            c,
            d: DMatrix::zeros(1, n_u),
            r: DMatrix::from_element(1, 1, noise_variance),
        }
    }
}

/// `ẋ = A x + B u + L w`, `E[w(t)w(s)] = q δ(t−s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub l: DVector<f64>,
    pub q: f64,
}

impl ContinuousStateModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.b.nrows() != n || self.l.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "continuous model: A {}x{}, B {}x{}, L {}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.l.len()
            )));
        }
        Ok(())
    }

    fn noise_free(&self) -> bool {
        self.q == 0.0 || self.l.iter().all(|v| *v == 0.0)
    }

    /// `L q Lᵀ`
    pub fn diffusion(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose() * self.q
    }

    /// Steady-state covariance `P∞` solving `A P + P Aᵀ + L q Lᵀ = 0`.
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>> {
        self.check_dims()?;
        let max_real = max_real_eigenvalue(&self.a);
        if !(max_real < 0.0) {
            return Err(Error::UnstableModel { max_real });
        }
        solve_continuous_lyapunov(&self.a, &self.diffusion())
    }
}

/// Discrete-time transition `x_t = A x_{t−1} + B u_{t−1} + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTransition {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// A full linear-Gaussian state-space model for one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLGSSM {
    pub transition: DiscreteTransition,
    pub observation: ObservationModel,
    pub dt: f64,
}

/// Continuous model of the bare oscillator, state `[z, ż]`.
pub fn build_system_model(params: &SystemParams, excitation: ExcitationKind) -> Result<ContinuousStateModel> {
    params.validate()?;
    let (m, c, k) = (params.mass, params.damping, params.stiffness);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k / m, -c / m]);
    let b = match excitation {
        ExcitationKind::DirectForce => DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / m]),
        ExcitationKind::BaseMotion => DMatrix::from_row_slice(2, 2, &[0.0, 0.0, k / m, c / m]),
    };
    Ok(ContinuousStateModel {
        a,
        b,
        l: DVector::zeros(2),
        q: 0.0,
    })
}

/// Couples the oscillator with a latent force that enters the equation of
/// motion with a negative sign.
pub fn augment(
    system: &ContinuousStateModel,
    force: &LatentForceSSM,
    params: &SystemParams,
) -> Result<ContinuousStateModel> {
    system.check_dims()?;
    if system.state_dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "system model must have 2 states, got {}",
            system.state_dim()
        )));
    }
    let beta = force.state_dim();
    if force.drift.ncols() != beta || force.noise_loading.len() != beta {
        return Err(Error::DimensionMismatch("latent force model".into()));
    }
    let n = 2 + beta;
    let n_u = system.input_dim();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (2, 2)).copy_from(&system.a);
    a.view_mut((2, 2), (beta, beta)).copy_from(&force.drift);
    // Coupling block: −B_cs for a unit force, then β−1 zero columns.
    a[(1, 2)] = -1.0 / params.mass;
    let mut b = DMatrix::zeros(n, n_u);
    b.view_mut((0, 0), (2, n_u)).copy_from(&system.b);
    let mut l = DVector::zeros(n);
    l.rows_mut(2, beta).copy_from(&force.noise_loading);
    Ok(ContinuousStateModel {
        a,
        b,
        l,
        q: force.spectral_density,
    })
}

/// Exact zero-order-hold discretisation of the transition.
///
/// `A = exp(A_c Δt)`, `Q = P∞ − A P∞ Aᵀ` and `B = A_c⁻¹ (A − I) B_c`; when
/// `A_c` is singular or badly conditioned the input integral
/// `∫₀^Δt exp(A_c τ) dτ B_c` is taken from a block exponential instead.
pub fn discretize_transition(model: &ContinuousStateModel, dt: f64) -> Result<DiscreteTransition> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    model.check_dims()?;
    let n = model.state_dim();
    let a = expm(&(&model.a * dt));
    let q = if model.noise_free() {
        DMatrix::zeros(n, n)
    } else {
        let p_inf = model.stationary_covariance()?;
        let scale = p_inf.amax().max(1.0);
        repair_psd(&p_inf - &a * &p_inf * a.transpose(), 1e-12 * scale)?
    };
    let b = zoh_input_matrix(model, &a, dt);
    Ok(DiscreteTransition { a, b, q })
}

fn zoh_input_matrix(model: &ContinuousStateModel, a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let n = model.state_dim();
    let n_u = model.input_dim();
    if n_u == 0 {
        return DMatrix::zeros(n, 0);
    }
    let eye = DMatrix::<f64>::identity(n, n);
    if let Some(inv) = model.a.clone().try_inverse() {
        let cond = model.a.lp_norm(1) * inv.lp_norm(1);
        if cond.is_finite() && cond < 1e10 {
            let b = inv * (a - &eye) * &model.b;
            if b.iter().all(|v| v.is_finite()) {
                return b;
            }
        }
    }
    // exp([[A_c, B_c], [0, 0]] Δt) carries ∫ exp(A_c τ) dτ B_c in its top-right block.
    let mut block = DMatrix::zeros(n + n_u, n + n_u);
    block.view_mut((0, 0), (n, n)).copy_from(&(&model.a * dt));
    block.view_mut((0, n), (n, n_u)).copy_from(&(&model.b * dt));
    expm(&block).view((0, n), (n, n_u)).into_owned()
}

pub fn discretize(model: &ContinuousStateModel, dt: f64, observation: &ObservationModel) -> Result<DiscreteLGSSM> {
    let transition = discretize_transition(model, dt)?;
    if observation.c.ncols() != model.state_dim() || observation.d.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation C has {} columns and D {} for a model with {} states and {} inputs",
            observation.c.ncols(),
            observation.d.ncols(),
            model.state_dim(),
            model.input_dim()
        )));
    }
    Ok(DiscreteLGSSM {
        transition,
        observation: observation.clone(),
        dt,
    })
}

/// Resetting regime: the oscillator evolves without the latent force and the
/// force states are redrawn from `N(0, P_0)`.
///
/// `A = blkdiag(exp(A_cs Δt), 0)`, `Q = blkdiag(P∞ₛ − Aₛ P∞ₛ Aₛᵀ, P_0 I)`.
pub fn build_resetting_model(
    system: &ContinuousStateModel,
    beta: usize,
    dt: f64,
    p0: f64,
    observation: &ObservationModel,
) -> Result<DiscreteLGSSM> {
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(invalid("p0", format!("must be > 0, got {p0}")));
    }
    let sys = discretize_transition(system, dt)?;
    let ns = system.state_dim();
    let n = ns + beta;
    let n_u = system.input_dim();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ns, ns)).copy_from(&sys.a);
    let mut b = DMatrix::zeros(n, n_u);
    b.view_mut((0, 0), (ns, n_u)).copy_from(&sys.b);
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (ns, ns)).copy_from(&sys.q);
    for i in ns..n {
        q[(i, i)] = p0;
    }
    if observation.c.ncols() != n {
        return Err(Error::DimensionMismatch("resetting observation model".into()));
    }
    Ok(DiscreteLGSSM {
        transition: DiscreteTransition { a, b, q },
        observation: observation.clone(),
        dt,
    })
}

/// Analytic predictor for the sticking phase: the mass holds its position,
/// the velocity is zero and the friction force balances the net applied load.
#[derive(Debug, Clone, PartialEq)]
pub struct StickingModel {
    pub params: SystemParams,
    pub excitation: ExcitationKind,
    pub observation: ObservationModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    Sliding,
    Sticking,
    Resetting,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegimeModel {
    Sliding(DiscreteLGSSM),
    Sticking(StickingModel),
    Resetting(DiscreteLGSSM),
}

impl RegimeModel {
    pub fn kind(&self) -> RegimeKind {
        match self {
            RegimeModel::Sliding(_) => RegimeKind::Sliding,
            RegimeModel::Sticking(_) => RegimeKind::Sticking,
            RegimeModel::Resetting(_) => RegimeKind::Resetting,
        }
    }

    pub fn observation(&self) -> &ObservationModel {
        match self {
            RegimeModel::Sliding(m) | RegimeModel::Resetting(m) => &m.observation,
            RegimeModel::Sticking(s) => &s.observation,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.observation().c.ncols()
    }
}

/// Ordered regime models; when a resetting regime is present it is last.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeModelSet {
    pub regimes: Vec<RegimeModel>,
    /// Prior mean of the state at the first sample.
    pub prior_mean: DVector<f64>,
    /// Prior covariance of the state at the first sample.
    pub prior_cov: DMatrix<f64>,
}

impl RegimeModelSet {
    pub fn new(regimes: Vec<RegimeModel>, prior_mean: DVector<f64>, prior_cov: DMatrix<f64>) -> Result<Self> {
        if regimes.is_empty() {
            return Err(invalid("regimes", "at least one regime is required"));
        }
        let n = prior_mean.len();
        if prior_cov.nrows() != n || prior_cov.ncols() != n {
            return Err(Error::DimensionMismatch("prior covariance".into()));
        }
        let n_obs = regimes[0].observation().c.nrows();
        for r in &regimes {
            if r.state_dim() != n || r.observation().c.nrows() != n_obs {
                return Err(Error::DimensionMismatch(
                    "all regimes must share state and observation dimensions".into(),
                ));
            }
        }
        let resets: Vec<usize> = regimes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind() == RegimeKind::Resetting)
            .map(|(i, _)| i)
            .collect();
        if resets.len() > 1 || (resets.len() == 1 && resets[0] != regimes.len() - 1) {
            return Err(invalid(
                "regimes",
                "at most one resetting regime, placed last",
            ));
        }
        if regimes.iter().filter(|r| r.kind() == RegimeKind::Sticking).count() > 1 {
            return Err(invalid("regimes", "at most one sticking regime"));
        }
        Ok(RegimeModelSet {
            regimes,
            prior_mean,
            prior_cov,
        })
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn has_reset(&self) -> bool {
        self.regimes.last().map(|r| r.kind()) == Some(RegimeKind::Resetting)
    }

    pub fn kinds(&self) -> Vec<RegimeKind> {
        self.regimes.iter().map(|r| r.kind()).collect()
    }
}

/// Everything needed to build the regime models of one oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    pub params: SystemParams,
    pub excitation: ExcitationKind,
    pub kernel: KernelSpec,
    pub dt: f64,
    pub observation: ObservationKind,
    pub noise_variance: f64,
    /// Prior variance of the latent force after a reset.
    pub p0: f64,
    /// Include the sticking regime (implies a resetting regime).
    pub stick_slip: bool,
    /// Include a resetting regime.
    pub reset: bool,
}

/// Builds `[Sliding, Sticking, Resetting]` for stick-slip identification,
/// `[Sliding, Resetting]` or the single-regime standard latent force model.
///
/// The prior is the stationary distribution of the sliding model.
pub fn assemble_regimes(spec: &RegimeSpec) -> Result<RegimeModelSet> {
    let force = matern_half_to_ssm(&spec.kernel)?;
    let beta = force.state_dim();
    let system = build_system_model(&spec.params, spec.excitation)?;
    let augmented = augment(&system, &force, &spec.params)?;
    let observation =
        ObservationModel::for_sensor(spec.observation, &spec.params, spec.excitation, beta, spec.noise_variance)?;
    let sliding = discretize(&augmented, spec.dt, &observation)?;
    let prior_cov = symmetrized(augmented.stationary_covariance()?);
    let mut regimes = vec![RegimeModel::Sliding(sliding)];
    if spec.stick_slip {
        regimes.push(RegimeModel::Sticking(StickingModel {
            params: spec.params,
            excitation: spec.excitation,
            observation: observation.clone(),
        }));
    }
    if spec.stick_slip || spec.reset {
        regimes.push(RegimeModel::Resetting(build_resetting_model(
            &system,
            beta,
            spec.dt,
            spec.p0,
            &observation,
        )?));
    }
    RegimeModelSet::new(regimes, DVector::zeros(2 + beta), prior_cov)
}
