use nalgebra::{DVector, Vector4};
use serde::{Deserialize, Serialize};

use super::{AircraftError, AircraftParams};

/// Longitudinal state: airspeed, flight-path angle, pitch angle, pitch rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub v: f64,
    pub gamma: f64,
    pub theta: f64,
    pub q: f64,
}

impl FlightState {
    pub fn new(v: f64, gamma: f64, theta: f64, q: f64) -> Self {
        Self { v, gamma, theta, q }
    }

    /// Aerodynamic angle of attack `θ − γ`.
    pub fn alpha(&self) -> f64 {
        self.theta - self.gamma
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.v, self.gamma, self.theta, self.q])
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Thrust, N.
    pub thrust: f64,
    /// Elevator deflection, rad.
    pub delta_e: f64,
}

impl ControlInput {
    pub fn new(thrust: f64, delta_e: f64) -> Self {
        Self { thrust, delta_e }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.thrust, self.delta_e])
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self::new(u[0], u[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroCoefficients {
    pub c_l: f64,
    pub c_d: f64,
    pub c_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroForces {
    pub lift: f64,
    pub drag: f64,
    pub moment: f64,
}

/// `(V', γ', θ', q')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightStateRate {
    pub v_dot: f64,
    pub gamma_dot: f64,
    pub theta_dot: f64,
    pub q_dot: f64,
}

impl FlightStateRate {
    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.v_dot, self.gamma_dot, self.theta_dot, self.q_dot)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.v_dot, self.gamma_dot, self.theta_dot, self.q_dot])
    }
}

/// Drag has no elevator term; lift and moment do.
pub fn aero_coefficients(p: &AircraftParams, alpha: f64, delta_e: f64) -> AeroCoefficients {
    AeroCoefficients {
        c_l: p.c_l0 + p.c_lalpha * alpha + p.c_ldelta_e * delta_e,
        c_d: p.c_d0 + p.c_dalpha * alpha,
        c_m: p.c_m0 + p.c_malpha * alpha + p.c_mdelta_e * delta_e,
    }
}

pub fn forces_moment(p: &AircraftParams, state: &FlightState, input: &ControlInput) -> AeroForces {
    let c = aero_coefficients(p, state.alpha(), input.delta_e);
    let qs = p.half_rho_s() * state.v * state.v;
    AeroForces {
        lift: qs * c.c_l,
        drag: qs * c.c_d,
        moment: qs * p.cbar * c.c_m,
    }
}

pub fn dynamics_rhs(p: &AircraftParams, state: &FlightState, input: &ControlInput) -> Result<FlightStateRate, AircraftError> {
    if !(state.v > 0.0) {
        return Err(AircraftError::NonPositiveAirspeed { v: state.v });
    }
    let alpha = state.alpha();
    let AeroForces { lift, drag, moment } = forces_moment(p, state, input);
    let w = p.m * p.g;
    let f = input.thrust;
    Ok(FlightStateRate {
        v_dot: (f * alpha.cos() - drag - w * state.gamma.sin()) / p.m,
        gamma_dot: (f * alpha.sin() + lift - w * state.gamma.cos()) / (p.m * state.v),
        theta_dot: state.q,
        q_dot: moment / p.i_yy,
    })
}
