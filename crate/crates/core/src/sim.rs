//! Fixed-step RK4 integration of plants under the linearizing controller.
//!
//! The control law is continuous-time: it is re-evaluated at every RK4 stage,
//! so the discrete solution converges to the closed-loop ODE at fourth order.

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use crate::affine::AffineSystem;
use crate::aircraft::{
    dynamics_rhs, zero_dynamics_rhs, AircraftError, AircraftParams, ControlInput, FlightState, OutputSet, ReferenceSignal,
};
use crate::iol::{ControlEvaluation, IolError, LinearizingController, OuterLoop};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("initial state is outside the admissible region: {0:?}")]
    Inadmissible(Vec<f64>),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },
    #[error("right-hand side failed at t = {t}: {reason}")]
    Rhs { t: f64, reason: String },
    #[error(transparent)]
    Control(#[from] IolError),
    #[error(transparent)]
    Aircraft(#[from] AircraftError),
}

fn check_finite(v: &DVector<f64>, what: &'static str, t: f64) -> Result<(), SimError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFinite { what, t })
    }
}

fn rk4_from<F>(rhs: &mut F, t: f64, x: &DVector<f64>, dt: f64, k1: DVector<f64>) -> Result<DVector<f64>, SimError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError>,
{
    let h2 = 0.5 * dt;
    let k2 = rhs(t + h2, &(x + &k1 * h2))?;
    check_finite(&k2, "RK4 stage 2", t + h2)?;
    let k3 = rhs(t + h2, &(x + &k2 * h2))?;
    check_finite(&k3, "RK4 stage 3", t + h2)?;
    let k4 = rhs(t + dt, &(x + &k3 * dt))?;
    check_finite(&k4, "RK4 stage 4", t + dt)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_finite(&next, "state", t + dt)?;
    Ok(next)
}

/// One classical Runge–Kutta step of `x' = rhs(t, x)`.
pub fn rk4_step<F>(mut rhs: F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>, SimError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError>,
{
    let k1 = rhs(t, x)?;
    check_finite(&k1, "RK4 stage 1", t)?;
    rk4_from(&mut rhs, t, x, dt, k1)
}

/// Integrates from `t = 0` to `horizon` and returns the state at every step.
pub fn integrate<F>(mut rhs: F, x0: &DVector<f64>, dt: f64, horizon: f64) -> Result<Vec<DVector<f64>>, SimError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError>,
{
    let n = step_count(dt, horizon)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(x0.clone());
    for k in 0..n {
        let next = rk4_step(&mut rhs, k as f64 * dt, &out[k], dt)?;
        out.push(next);
    }
    Ok(out)
}

fn step_count(dt: f64, horizon: f64) -> Result<usize, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("time step {dt} must be positive")));
    }
    if !(horizon >= dt && horizon.is_finite()) {
        return Err(SimError::Config(format!("horizon {horizon} must be at least one step ({dt})")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Bound on `dt · max|eig|` of the nominal linear design.
pub const STABILITY_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Log every n-th step (the final step is always logged).
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 120.0,
            log_every: 10,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> Result<usize, SimError> {
        if self.log_every == 0 {
            return Err(SimError::Config("log_every must be at least 1".into()));
        }
        step_count(self.dt, self.horizon)
    }

    /// Rejects a step that is too coarse for the fastest design mode.
    pub fn check_design(&self, spectral_radius: f64) -> Result<(), SimError> {
        if self.dt * spectral_radius >= STABILITY_GUARD {
            return Err(SimError::Config(format!(
                "dt = {} is too large for the design: dt * max|eig| = {:.3} >= {STABILITY_GUARD}",
                self.dt,
                self.dt * spectral_radius
            )));
        }
        Ok(())
    }
}

/// A physical process driven by the controller.
pub trait Plant: Send + Sync {
    fn dim_state(&self) -> usize;
    /// State derivative under input `u`.
    fn rhs(&self, s: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, String>;
    /// The state in the coordinates the controller was designed for.
    fn controller_state(&self, s: &DVector<f64>) -> DVector<f64>;
}

/// The affine model itself used as the plant; controller coordinates are the state.
pub struct AffinePlant(pub AffineSystem);

impl Plant for AffinePlant {
    fn dim_state(&self) -> usize {
        self.0.dim_state()
    }

    fn rhs(&self, s: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, String> {
        self.0.rhs(s, u).map_err(|e| e.to_string())
    }

    fn controller_state(&self, s: &DVector<f64>) -> DVector<f64> {
        s.clone()
    }
}

/// Full nonlinear longitudinal dynamics in `(V, γ, θ, q)`, observed in the
/// error coordinates of the chosen output set.
#[derive(Debug, Clone, Copy)]
pub struct AircraftPlant {
    pub params: AircraftParams,
    pub reference: ReferenceSignal,
    pub outputs: OutputSet,
}

impl Plant for AircraftPlant {
    fn dim_state(&self) -> usize {
        4
    }

    fn rhs(&self, s: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, String> {
        dynamics_rhs(
            &self.params,
            &FlightState::from_slice(s.as_slice()),
            &ControlInput::from_slice(u.as_slice()),
        )
        .map(|r| r.to_vector())
        .map_err(|e| e.to_string())
    }

    fn controller_state(&self, s: &DVector<f64>) -> DVector<f64> {
        self.outputs.error_state(&self.reference, &FlightState::from_slice(s.as_slice()))
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub plant_state: DVector<f64>,
    pub controller_state: DVector<f64>,
    pub command: DVector<f64>,
    pub control: ControlEvaluation,
}

impl Sample {
    pub fn singular(&self) -> bool {
        self.control.warning.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFailure {
    pub t: f64,
    pub error: SimError,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub samples: Vec<Sample>,
    /// Set when the run stopped early; the samples up to that point are kept.
    pub failure: Option<SimFailure>,
}

impl ClosedLoopTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn singular_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.singular()).count()
    }
}

struct Loop<'a> {
    plant: &'a dyn Plant,
    ctrl: &'a LinearizingController,
    outer: &'a dyn OuterLoop,
}

impl Loop<'_> {
    fn evaluate(&self, t: f64, s: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, ControlEvaluation), SimError> {
        let x = self.plant.controller_state(s);
        let xi = self.ctrl.psi(&x)?;
        let v = self.outer.command(t, &xi);
        let eval = self.ctrl.evaluate(&x, &v, t)?;
        Ok((x, v, eval))
    }

    fn derivative(&self, s: &DVector<f64>, u: &DVector<f64>, t: f64) -> Result<DVector<f64>, SimError> {
        let d = self.plant.rhs(s, u).map_err(|reason| SimError::Rhs { t, reason })?;
        check_finite(&d, "plant derivative", t)?;
        Ok(d)
    }
}

/// Steps `plant` under `u = α(x) + γ(x)⁺ v`, `v` from `outer` on `ξ = ψ(x)`.
/// Errors during the run end it early and are reported in the trace; only
/// configuration and initial-state problems are returned as `Err`.
pub fn simulate_closed_loop(
    plant: &dyn Plant,
    ctrl: &LinearizingController,
    outer: &dyn OuterLoop,
    s0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<ClosedLoopTrace, SimError> {
    let n = cfg.steps()?;
    if s0.len() != plant.dim_state() {
        return Err(SimError::Config(format!(
            "initial state has length {}, plant has {}",
            s0.len(),
            plant.dim_state()
        )));
    }
    if let Some(design) = outer.design_matrix(ctrl.companion()) {
        let radius = design.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
        cfg.check_design(radius)?;
    }
    let x0 = plant.controller_state(s0);
    if !ctrl.system().is_admissible(&x0) {
        return Err(SimError::Inadmissible(x0.iter().copied().collect()));
    }

    let lp = Loop { plant, ctrl, outer };
    let mut samples = Vec::with_capacity(n / cfg.log_every + 2);
    let mut s = s0.clone();
    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        let step = (|| {
            let (x, v, eval) = lp.evaluate(t, &s)?;
            let k1 = lp.derivative(&s, &eval.u, t)?;
            Ok::<_, SimError>((x, v, eval, k1))
        })();
        let (x, v, eval, k1) = match step {
            Ok(r) => r,
            Err(error) => {
                return Ok(ClosedLoopTrace {
                    samples,
                    failure: Some(SimFailure { t, error }),
                })
            }
        };
        if k % cfg.log_every == 0 || k == n {
            samples.push(Sample {
                t,
                plant_state: s.clone(),
                controller_state: x,
                command: v,
                control: eval,
            });
        }
        if k == n {
            break;
        }
        let mut rhs = |tt: f64, ss: &DVector<f64>| {
            let (_, _, e) = lp.evaluate(tt, ss)?;
            lp.derivative(ss, &e.u, tt)
        };
        match rk4_from(&mut rhs, t, &s, cfg.dt, k1) {
            Ok(next) => s = next,
            Err(error) => {
                return Ok(ClosedLoopTrace {
                    samples,
                    failure: Some(SimFailure { t, error }),
                })
            }
        }
    }
    Ok(ClosedLoopTrace { samples, failure: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroDynamicsTrace {
    pub t: Vec<f64>,
    pub eta: Vec<Vector2<f64>>,
    /// True when the run left the domain `|η1| < V̄` (or became non-finite).
    pub diverged: bool,
    pub divergence_time: Option<f64>,
}

impl ZeroDynamicsTrace {
    /// Largest `‖η(t) − η_ref‖`.
    pub fn max_offset(&self, eta_ref: &Vector2<f64>) -> f64 {
        self.eta.iter().map(|e| (e - eta_ref).norm()).fold(0.0, f64::max)
    }
}

/// Integrates the zero dynamics from `eta0`, stopping at a domain exit.
pub fn simulate_zero_dynamics(
    p: &AircraftParams,
    r: &ReferenceSignal,
    eta0: &Vector2<f64>,
    cfg: &SimConfig,
) -> Result<ZeroDynamicsTrace, SimError> {
    let n = cfg.steps()?;
    if !(eta0[0].abs() < r.v_bar) {
        return Err(SimError::Precondition(format!(
            "|eta1(0)| = {} must be below V_bar = {}",
            eta0[0].abs(),
            r.v_bar
        )));
    }
    let rhs = |_t: f64, e: &DVector<f64>| {
        zero_dynamics_rhs(p, r, &Vector2::new(e[0], e[1]))
            .map(|d| DVector::from_column_slice(d.as_slice()))
            .map_err(SimError::from)
    };
    let mut trace = ZeroDynamicsTrace {
        t: vec![0.0],
        eta: vec![*eta0],
        diverged: false,
        divergence_time: None,
    };
    let mut e = DVector::from_column_slice(eta0.as_slice());
    for k in 0..n {
        let t = k as f64 * cfg.dt;
        match rk4_step(rhs, t, &e, cfg.dt) {
            Ok(next) if next[0].abs() < r.v_bar => e = next,
            _ => {
                trace.diverged = true;
                trace.divergence_time = Some(t);
                break;
            }
        }
        if (k + 1) % cfg.log_every == 0 || k + 1 == n {
            trace.t.push(t + cfg.dt);
            trace.eta.push(Vector2::new(e[0], e[1]));
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn constant_state_for_zero_rate() {
        let x = dvector![1.0, -2.0];
        let next = rk4_step(|_, x: &DVector<f64>| Ok(DVector::zeros(x.len())), 0.0, &x, 0.1).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn exponential_decay_matches_taylor_polynomial() {
        let next = rk4_step(|_, x: &DVector<f64>| Ok(-x), 0.0, &dvector![1.0], 0.1).unwrap();
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_relative_eq!(next[0], taylor, epsilon = 1e-15);
        assert_relative_eq!(next[0], 0.9048375, epsilon = 1e-7);
    }

    #[test]
    fn non_finite_stage_is_reported() {
        let err = rk4_step(|t, _x: &DVector<f64>| Ok(dvector![1.0 / (t - 0.05)]), 0.0, &dvector![0.0], 0.1).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }));
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.steps().is_err());
        let short = SimConfig {
            dt: 0.1,
            horizon: 0.01,
            log_every: 1,
        };
        assert!(short.steps().is_err());
        let cfg = SimConfig::default();
        assert_eq!(cfg.steps().unwrap(), 120_000);
        assert!(cfg.check_design(50.0).is_ok());
        assert!(cfg.check_design(100.0).is_err());
    }

    #[test]
    fn integrate_returns_every_step() {
        let xs = integrate(|_, x: &DVector<f64>| Ok(-x), &dvector![1.0], 0.01, 1.0).unwrap();
        assert_eq!(xs.len(), 101);
        assert_relative_eq!(xs[100][0], (-1.0f64).exp(), epsilon = 1e-9);
    }
}
