use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AircraftParams, FlightState};
use crate::affine::{verify_relative_degree, AffineError, AffineSystem, MatrixFn, RelativeDegreeProfile, RelativeDegreeReport};

/// Commanded airspeed, flight-path angle and pitch attitude with their rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub v_bar: f64,
    pub v_bar_dot: f64,
    pub gamma_bar: f64,
    pub gamma_bar_dot: f64,
    pub theta_bar: f64,
    pub theta_bar_dot: f64,
    pub theta_bar_ddot: f64,
}

impl ReferenceSignal {
    pub fn constant(v_bar: f64, gamma_bar: f64, theta_bar: f64) -> Self {
        Self {
            v_bar,
            v_bar_dot: 0.0,
            gamma_bar,
            gamma_bar_dot: 0.0,
            theta_bar,
            theta_bar_dot: 0.0,
            theta_bar_ddot: 0.0,
        }
    }
}

/// How airspeed enters the pitch-moment channel of the affine model.
///
/// `Physical` follows `M = ½ρV²S c̄ C_M`, so the drift and elevator entries of
/// `q'` scale with `V²`. `AsPublished` keeps the first-power `V` form that
/// some derivations of this model print; it only exists to reproduce those
/// expressions and is not consistent with [`super::dynamics_rhs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchChannel {
    #[default]
    Physical,
    AsPublished,
}

impl PitchChannel {
    fn power(self) -> i32 {
        match self {
            PitchChannel::Physical => 2,
            PitchChannel::AsPublished => 1,
        }
    }
}

/// Default floor on `|cos α|` below which a singularity warning is raised.
pub const DEFAULT_COS_ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemOptions {
    pub pitch: PitchChannel,
    pub cos_alpha_floor: f64,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self {
            pitch: PitchChannel::Physical,
            cos_alpha_floor: DEFAULT_COS_ALPHA_FLOOR,
        }
    }
}

/// Which outputs are regulated.
///
/// * `Two`: `x = [V−V̄, γ−γ̄, θ, q]`, `y = [x1, x2]`.
/// * `Three`: `x = [V−V̄, γ−γ̄, θ−θ̄, q−θ̄']`, `y = [x1, x2, x3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSet {
    Two,
    Three,
}

impl OutputSet {
    pub fn num_outputs(self) -> usize {
        match self {
            OutputSet::Two => 2,
            OutputSet::Three => 3,
        }
    }

    pub fn relative_degrees(self) -> Vec<usize> {
        match self {
            OutputSet::Two => vec![1, 1],
            OutputSet::Three => vec![1, 1, 2],
        }
    }

    pub fn error_state(self, r: &ReferenceSignal, s: &FlightState) -> DVector<f64> {
        match self {
            OutputSet::Two => DVector::from_vec(vec![s.v - r.v_bar, s.gamma - r.gamma_bar, s.theta, s.q]),
            OutputSet::Three => DVector::from_vec(vec![
                s.v - r.v_bar,
                s.gamma - r.gamma_bar,
                s.theta - r.theta_bar,
                s.q - r.theta_bar_dot,
            ]),
        }
    }

    pub fn flight_state(self, r: &ReferenceSignal, x: &DVector<f64>) -> FlightState {
        match self {
            OutputSet::Two => FlightState::new(x[0] + r.v_bar, x[1] + r.gamma_bar, x[2], x[3]),
            OutputSet::Three => FlightState::new(x[0] + r.v_bar, x[1] + r.gamma_bar, x[2] + r.theta_bar, x[3] + r.theta_bar_dot),
        }
    }

    pub fn build(self, p: &AircraftParams, r: &ReferenceSignal, opts: &SystemOptions) -> AffineSystem {
        match self {
            OutputSet::Two => build_two_output_system_with(p, r, opts),
            OutputSet::Three => build_three_output_system_with(p, r, opts),
        }
    }
}

/// Closed-form `f`, `g` and their Jacobians in error coordinates.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    p: AircraftParams,
    r: ReferenceSignal,
    power: i32,
    theta_offset: f64,
    theta_ddot: f64,
}

impl Kernel {
    fn new(p: &AircraftParams, r: &ReferenceSignal, pitch: PitchChannel, set: OutputSet) -> Self {
        let (theta_offset, theta_ddot) = match set {
            OutputSet::Two => (0.0, 0.0),
            OutputSet::Three => (r.theta_bar, r.theta_bar_ddot),
        };
        Self {
            p: *p,
            r: *r,
            power: pitch.power(),
            theta_offset,
            theta_ddot,
        }
    }

    fn airspeed(&self, x: &DVector<f64>) -> f64 {
        x[0] + self.r.v_bar
    }

    fn path_angle(&self, x: &DVector<f64>) -> f64 {
        x[1] + self.r.gamma_bar
    }

    fn alpha(&self, x: &DVector<f64>) -> f64 {
        x[2] + self.theta_offset - x[1] - self.r.gamma_bar
    }

    // ρS/(2m) and ρSc̄/(2I_yy)
    fn scales(&self) -> (f64, f64) {
        let a = self.p.half_rho_s() / self.p.m;
        let b = self.p.half_rho_s() * self.p.cbar / self.p.i_yy;
        (a, b)
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.p;
        let (a, b) = self.scales();
        let v = self.airspeed(x);
        let gam = self.path_angle(x);
        let al = self.alpha(x);
        let cd = p.c_d0 + p.c_dalpha * al;
        let cl = p.c_l0 + p.c_lalpha * al;
        let cm = p.c_m0 + p.c_malpha * al;
        DVector::from_vec(vec![
            -a * v * v * cd - p.g * gam.sin() - self.r.v_bar_dot,
            a * v * cl - p.g * gam.cos() / v - self.r.gamma_bar_dot,
            x[3],
            b * v.powi(self.power) * cm - self.theta_ddot,
        ])
    }

    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.p;
        let (a, b) = self.scales();
        let v = self.airspeed(x);
        let al = self.alpha(x);
        DMatrix::from_row_slice(
            4,
            2,
            &[
                al.cos() / p.m,
                0.0,
                al.sin() / (p.m * v),
                a * v * p.c_ldelta_e,
                0.0,
                0.0,
                0.0,
                b * v.powi(self.power) * p.c_mdelta_e,
            ],
        )
    }

    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.p;
        let (a, b) = self.scales();
        let v = self.airspeed(x);
        let gam = self.path_angle(x);
        let al = self.alpha(x);
        let cd = p.c_d0 + p.c_dalpha * al;
        let cl = p.c_l0 + p.c_lalpha * al;
        let cm = p.c_m0 + p.c_malpha * al;
        let n = self.power;
        let vn = v.powi(n);
        let dvn = f64::from(n) * v.powi(n - 1);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                -2.0 * a * v * cd,
                a * v * v * p.c_dalpha - p.g * gam.cos(),
                -a * v * v * p.c_dalpha,
                0.0,
                a * cl + p.g * gam.cos() / (v * v),
                -a * v * p.c_lalpha + p.g * gam.sin() / v,
                a * v * p.c_lalpha,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                b * dvn * cm,
                -b * vn * p.c_malpha,
                b * vn * p.c_malpha,
                0.0,
            ],
        )
    }

    fn thrust_column_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.p.m;
        let v = self.airspeed(x);
        let (s, c) = self.alpha(x).sin_cos();
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = s / m;
        j[(0, 2)] = -s / m;
        j[(1, 0)] = -s / (m * v * v);
        j[(1, 1)] = -c / (m * v);
        j[(1, 2)] = c / (m * v);
        j
    }

    fn elevator_column_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = self.scales();
        let v = self.airspeed(x);
        let n = self.power;
        let mut j = DMatrix::zeros(4, 4);
        j[(1, 0)] = a * self.p.c_ldelta_e;
        j[(3, 0)] = b * f64::from(n) * v.powi(n - 1) * self.p.c_mdelta_e;
        j
    }
}

fn assemble(kernel: Kernel, set: OutputSet, opts: &SystemOptions) -> AffineSystem {
    let ly = set.num_outputs();
    let k = Arc::new(kernel);
    let (kf, kg, kj) = (k.clone(), k.clone(), k.clone());
    let (kc1, kc2, ka, ks) = (k.clone(), k.clone(), k.clone(), k);
    let floor = opts.cos_alpha_floor;
    let columns: Vec<MatrixFn> = vec![
        Arc::new(move |x: &DVector<f64>| kc1.thrust_column_jacobian(x)),
        Arc::new(move |x: &DVector<f64>| kc2.elevator_column_jacobian(x)),
    ];
    AffineSystem::new(
        4,
        2,
        ly,
        move |x| kf.drift(x),
        move |x| kg.input_matrix(x),
        move |x| x.rows(0, ly).into_owned(),
    )
    .with_drift_jacobian(move |x| kj.drift_jacobian(x))
    .with_output_jacobian(move |_| DMatrix::identity(ly, 4))
    .with_input_column_jacobians(columns)
    .with_admissible_region(move |x| ka.airspeed(x) > 0.0 && ka.alpha(x).abs() < FRAC_PI_2)
    .with_singularity_monitor(move |x| {
        let v = ks.airspeed(x);
        let c = ks.alpha(x).cos();
        if v <= 0.0 {
            Some(format!("airspeed {v} m/s is not positive"))
        } else if c.abs() < floor {
            Some(format!("|cos(alpha)| = {:.3e} is below the floor {floor:.1e}", c.abs()))
        } else {
            None
        }
    })
}

pub fn build_two_output_system(p: &AircraftParams, r: &ReferenceSignal) -> AffineSystem {
    build_two_output_system_with(p, r, &SystemOptions::default())
}

pub fn build_two_output_system_with(p: &AircraftParams, r: &ReferenceSignal, opts: &SystemOptions) -> AffineSystem {
    assemble(Kernel::new(p, r, opts.pitch, OutputSet::Two), OutputSet::Two, opts)
}

pub fn build_three_output_system(p: &AircraftParams, r: &ReferenceSignal) -> AffineSystem {
    build_three_output_system_with(p, r, &SystemOptions::default())
}

pub fn build_three_output_system_with(p: &AircraftParams, r: &ReferenceSignal, opts: &SystemOptions) -> AffineSystem {
    assemble(Kernel::new(p, r, opts.pitch, OutputSet::Three), OutputSet::Three, opts)
}

/// Probe states around the reference used to verify the relative degrees:
/// the reference itself and small excursions in every coordinate.
pub fn probe_states(r: &ReferenceSignal) -> Vec<DVector<f64>> {
    let dv = 0.05 * r.v_bar.abs().max(1.0);
    vec![
        DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![dv, 0.01, 0.02, 0.01]),
        DVector::from_vec(vec![-dv, -0.02, 0.01, -0.02]),
        DVector::from_vec(vec![0.5 * dv, 0.03, -0.02, 0.005]),
    ]
}

/// Verifies `[1, 1]` or `[1, 1, 2]` at [`probe_states`] (shifted so that the
/// two-output pitch coordinate sits at the reference attitude).
pub fn verify_aircraft_profile(
    sys: &AffineSystem,
    set: OutputSet,
    r: &ReferenceSignal,
    tol: f64,
) -> Result<RelativeDegreeReport, AffineError> {
    let probes: Vec<_> = probe_states(r)
        .into_iter()
        .map(|mut x| {
            if set == OutputSet::Two {
                x[2] += r.theta_bar;
            }
            x
        })
        .collect();
    verify_relative_degree(sys, &RelativeDegreeProfile::new(set.relative_degrees()), &probes, tol)
}
