//! Longitudinal point-mass-plus-pitch aircraft model with elevator lift.

mod dynamics;
mod internal;
mod params;
mod systems;

use thiserror::Error;

pub use dynamics::{
    aero_coefficients, dynamics_rhs, forces_moment, AeroCoefficients, AeroForces, ControlInput, FlightState, FlightStateRate,
};
pub use internal::{
    closed_form_two_output_control, diffeo_forward, diffeo_inverse, eta_fields, zero_dynamics_eigenvalues, zero_dynamics_equilibrium,
    zero_dynamics_jacobian, zero_dynamics_rhs, TransformedState,
};
pub use params::{AircraftParams, ParamsError};
pub use systems::{
    build_three_output_system, build_three_output_system_with, build_two_output_system, build_two_output_system_with, probe_states,
    verify_aircraft_profile, OutputSet, PitchChannel, ReferenceSignal, SystemOptions, DEFAULT_COS_ALPHA_FLOOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AircraftError {
    #[error("airspeed {v} m/s is not positive")]
    NonPositiveAirspeed { v: f64 },
    #[error("eta1 = {eta1} is outside the arcsin domain |eta1| <= xi1 + V_bar (xi1 = {xi1}, V_bar = {v_bar})")]
    ArcsinDomain { eta1: f64, xi1: f64, v_bar: f64 },
    #[error("zero dynamics need |eta1| < V_bar (eta1 = {eta1}, V_bar = {v_bar})")]
    ZeroDynamicsDomain { eta1: f64, v_bar: f64 },
    #[error("control law is singular: cos(alpha) = {cos_alpha}, airspeed = {airspeed}")]
    Singular { cos_alpha: f64, airspeed: f64 },
}
