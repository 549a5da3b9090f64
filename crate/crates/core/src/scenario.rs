//! Aircraft speed-change scenarios: trim at the initial and commanded speeds,
//! step the references at `t = 0`, and fly the full nonlinear model under
//! the linearizing controller.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aircraft::{
    verify_aircraft_profile, AircraftParams, FlightState, OutputSet, PitchChannel, ReferenceSignal, SystemOptions, DEFAULT_COS_ALPHA_FLOOR,
};
use crate::iol::{ChainFeedback, IolError, LinearizingController};
use crate::linalg::DEFAULT_PINV_TOL;
use crate::sim::{simulate_closed_loop, AircraftPlant, ClosedLoopTrace, SimConfig, SimError, SimFailure};
use crate::trim::{solve_trim, TrimError, TrimOptions, TrimPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("trim failed at V = {v} m/s: {source}")]
    Trim {
        v: f64,
        #[source]
        source: TrimError,
    },
    #[error("relative-degree verification failed: {0}")]
    RelativeDegree(String),
    #[error(transparent)]
    Control(#[from] IolError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Outer-loop gains: `v = [k1 x1, k2 x2, k3 x3 + k4 x4]` (three outputs) or
/// `v = [k1 x1, k2 x2]` (two outputs; `k3`, `k4` unused).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl GainSet {
    pub const NOMINAL: GainSet = GainSet {
        k1: -0.5,
        k2: -1.0,
        k3: -5.0,
        k4: -3.0,
    };

    pub fn chain_gains(&self, outputs: OutputSet) -> Vec<f64> {
        match outputs {
            OutputSet::Two => vec![self.k1, self.k2],
            OutputSet::Three => vec![self.k1, self.k2, self.k3, self.k4],
        }
    }

    /// Every gain used by `outputs` must be finite and strictly negative.
    pub fn validate(&self, outputs: OutputSet) -> Result<(), ScenarioError> {
        for (i, k) in self.chain_gains(outputs).iter().enumerate() {
            if !(k.is_finite() && *k < 0.0) {
                return Err(ScenarioError::Config(format!("gain k{} = {k} must be negative", i + 1)));
            }
        }
        Ok(())
    }
}

impl Default for GainSet {
    fn default() -> Self {
        Self::NOMINAL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub params: AircraftParams,
    pub outputs: OutputSet,
    pub v0: f64,
    pub v_cmd: f64,
    pub gamma: f64,
    pub gains: GainSet,
    /// Offset added to the commanded-speed trim pitch when forming `θ̄`, rad.
    pub pitch_bias: f64,
    pub pinv_tol: f64,
    pub pitch_channel: PitchChannel,
    pub sim: SimConfig,
    pub trim: TrimOptions,
}

impl ScenarioSpec {
    /// 200 → 250 m/s, level flight, three outputs, gains (−0.5, −1, −5, −3).
    pub fn nominal(params: AircraftParams) -> Self {
        Self {
            params,
            outputs: OutputSet::Three,
            v0: 200.0,
            v_cmd: 250.0,
            gamma: 0.0,
            gains: GainSet::NOMINAL,
            pitch_bias: 0.0,
            pinv_tol: DEFAULT_PINV_TOL,
            pitch_channel: PitchChannel::Physical,
            sim: SimConfig::default(),
            trim: TrimOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        for (name, v) in [("V0", self.v0), ("V_cmd", self.v_cmd)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Config(format!("{name} = {v} must be positive")));
            }
        }
        if !self.pitch_bias.is_finite() || !self.gamma.is_finite() {
            return Err(ScenarioError::Config("pitch bias and flight-path angle must be finite".into()));
        }
        if !(self.pinv_tol.is_finite() && self.pinv_tol >= 0.0) {
            return Err(ScenarioError::Config(format!("pinv_tol = {} must be non-negative", self.pinv_tol)));
        }
        self.gains.validate(self.outputs)?;
        self.sim.steps()?;
        Ok(())
    }
}

/// One logged sample in physical units and error coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: FlightState,
    /// Controller coordinates; for two outputs `x3 = θ`, `x4 = q`.
    pub x: [f64; 4],
    pub thrust: f64,
    pub delta_e: f64,
    /// Outer-loop command; `v3` is NaN with two outputs.
    pub v: [f64; 3],
    /// Diagonal of `Λ`; `λ3` is NaN with two outputs.
    pub lambda: [f64; 3],
    pub offdiag: f64,
    pub lambda_trace: f64,
    pub lambda_rank: usize,
    pub idempotence_residual: f64,
    pub symmetry_residual: f64,
    pub singular: bool,
    pub reference: ReferenceSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub failure: Option<SimFailure>,
}

fn pad3(v: &DVector<f64>) -> [f64; 3] {
    [v[0], v[1], v.get(2).copied().unwrap_or(f64::NAN)]
}

impl SimTrace {
    fn from_closed_loop(trace: ClosedLoopTrace, reference: &ReferenceSignal) -> Self {
        let rows = trace
            .samples
            .into_iter()
            .map(|s| {
                let lam = &s.control.lambda;
                let x = &s.controller_state;
                TraceRow {
                    t: s.t,
                    state: FlightState::from_slice(s.plant_state.as_slice()),
                    x: [x[0], x[1], x[2], x[3]],
                    thrust: s.control.u[0],
                    delta_e: s.control.u[1],
                    v: pad3(&s.command),
                    lambda: pad3(&lam.diagonal),
                    offdiag: lam.offdiag_mass,
                    lambda_trace: lam.trace(),
                    lambda_rank: lam.rank,
                    idempotence_residual: lam.idempotence_residual,
                    symmetry_residual: lam.symmetry_residual,
                    singular: s.control.warning.is_some(),
                    reference: *reference,
                }
            })
            .collect();
        Self {
            rows,
            failure: trace.failure,
        }
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Controller coordinate `x_{i+1}` over the run.
    pub fn error_series(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.x[i]).collect()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

pub const TRACE_CSV_HEADER: &str = "t,V,gamma,theta,q,x1,x2,x3,x4,F,delta_e,v1,v2,v3,lam1,lam2,lam3,offdiag,Vref,gammaref,thetaref";

pub fn write_trace_csv<W: Write>(mut w: W, trace: &SimTrace) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in &trace.rows {
        let s = &r.state;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            s.v,
            s.gamma,
            s.theta,
            s.q,
            r.x[0],
            r.x[1],
            r.x[2],
            r.x[3],
            r.thrust,
            r.delta_e,
            r.v[0],
            r.v[1],
            r.v[2],
            r.lambda[0],
            r.lambda[1],
            r.lambda[2],
            r.offdiag,
            r.reference.v_bar,
            r.reference.gamma_bar,
            r.reference.theta_bar
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub initial_trim: TrimPoint,
    pub command_trim: TrimPoint,
    pub reference: ReferenceSignal,
    pub trace: SimTrace,
}

/// Builds the verified controller for `outputs` around `reference`.
pub fn build_controller(
    params: &AircraftParams,
    reference: &ReferenceSignal,
    outputs: OutputSet,
    pitch: PitchChannel,
    pinv_tol: f64,
) -> Result<LinearizingController, ScenarioError> {
    let opts = SystemOptions {
        pitch,
        cos_alpha_floor: DEFAULT_COS_ALPHA_FLOOR,
    };
    let sys = outputs.build(params, reference, &opts);
    let report = verify_aircraft_profile(&sys, outputs, reference, 1e-9).map_err(|e| ScenarioError::RelativeDegree(e.to_string()))?;
    if !report.passed {
        let worst: Vec<String> = report
            .failures()
            .map(|e| format!("output {} order {}: {:.3e}", e.output + 1, e.order, e.scaled_magnitude))
            .collect();
        return Err(ScenarioError::RelativeDegree(worst.join("; ")));
    }
    Ok(LinearizingController::new(sys, report.profile, pinv_tol)?)
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun, ScenarioError> {
    spec.validate()?;
    let p = &spec.params;
    let initial_trim = solve_trim(p, spec.v0, spec.gamma, None, &spec.trim).map_err(|source| ScenarioError::Trim { v: spec.v0, source })?;
    let command_trim = solve_trim(p, spec.v_cmd, spec.gamma, Some(initial_trim.guess()), &spec.trim)
        .map_err(|source| ScenarioError::Trim { v: spec.v_cmd, source })?;
    let reference = ReferenceSignal::constant(spec.v_cmd, spec.gamma, command_trim.theta + spec.pitch_bias);
    let ctrl = build_controller(p, &reference, spec.outputs, spec.pitch_channel, spec.pinv_tol)?;
    let outer = ChainFeedback::new(ctrl.profile(), spec.gains.chain_gains(spec.outputs))?;
    let plant = AircraftPlant {
        params: *p,
        reference,
        outputs: spec.outputs,
    };
    let s0 = initial_trim.state().to_vector();
    let raw = simulate_closed_loop(&plant, &ctrl, &outer, &s0, &spec.sim)?;
    Ok(ScenarioRun {
        spec: spec.clone(),
        initial_trim,
        command_trim,
        reference,
        trace: SimTrace::from_closed_loop(raw, &reference),
    })
}

/// The nominal scenario with the pitch reference offset by `bias` rad.
pub fn run_incorrect_pitch_scenario(spec: &ScenarioSpec, bias: f64) -> Result<ScenarioRun, ScenarioError> {
    let biased = ScenarioSpec {
        pitch_bias: bias,
        ..spec.clone()
    };
    run_scenario(&biased)
}

/// First time after which `|y|` stays within `frac` of its peak magnitude.
/// `None` when the final sample is still outside the band.
pub fn settling_time(t: &[f64], y: &[f64], frac: f64) -> Option<f64> {
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return t.first().copied();
    }
    let band = frac * peak;
    match y.iter().rposition(|v| v.abs() > band) {
        None => t.first().copied(),
        Some(i) if i + 1 < t.len() => Some(t[i + 1]),
        Some(_) => None,
    }
}

/// Peak `|y|` over consecutive windows `[start + k·width, start + (k+1)·width)`.
pub fn window_envelopes(t: &[f64], y: &[f64], start: f64, width: f64) -> Vec<f64> {
    let mut env: Vec<f64> = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < start {
            continue;
        }
        let k = ((ti - start) / width).floor() as usize;
        if env.len() <= k {
            env.resize(k + 1, 0.0);
        }
        env[k] = env[k].max(yi.abs());
    }
    env
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub completed: bool,
    pub final_time: f64,
    pub speed_error: f64,
    pub path_angle_error: f64,
    pub pitch_error: f64,
    pub settling: [Option<f64>; 3],
    pub max_offdiag: f64,
    pub singular_samples: usize,
    pub failure: Option<String>,
}

impl ScenarioRun {
    pub fn summary(&self) -> ScenarioSummary {
        let t = self.trace.times();
        let settle = |i: usize| settling_time(&t, &self.trace.error_series(i), 0.02);
        let last = self.trace.last();
        let r = &self.reference;
        ScenarioSummary {
            completed: self.trace.completed(),
            final_time: last.map_or(0.0, |l| l.t),
            speed_error: last.map_or(f64::NAN, |l| l.state.v - r.v_bar),
            path_angle_error: last.map_or(f64::NAN, |l| l.state.gamma - r.gamma_bar),
            pitch_error: last.map_or(f64::NAN, |l| l.state.theta - r.theta_bar),
            settling: [settle(0), settle(1), settle(2)],
            max_offdiag: self.trace.rows.iter().map(|r| r.offdiag).fold(0.0, f64::max),
            singular_samples: self.trace.rows.iter().filter(|r| r.singular).count(),
            failure: self.trace.failure.as_ref().map(|f| format!("t = {}: {}", f.t, f.error)),
        }
    }
}
