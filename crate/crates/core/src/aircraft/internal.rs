//! Two-output case: internal coordinates, the change of variables
//! `T(x) = (η, ξ)`, the zero-dynamics vector field and a hand-expanded
//! linearizing control law.

use std::sync::Arc;

use nalgebra::{Complex, DVector, Matrix2, Vector2};

use super::systems::DEFAULT_COS_ALPHA_FLOOR;
use super::{AircraftError, AircraftParams, ControlInput, ReferenceSignal};
use crate::affine::{GradientField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedState {
    pub eta: Vector2<f64>,
    pub xi: Vector2<f64>,
}

/// `η1 = sin(x3 − x2 − γ̄)(x1 + V̄)` and `η2 = K x2 − x4`, with
/// `K = m c̄ C_mδe / (I_yy C_Lδe)`, each with its exact gradient.
pub fn eta_fields(p: &AircraftParams, r: &ReferenceSignal) -> [Arc<dyn ScalarField>; 2] {
    let (vb, gb) = (r.v_bar, r.gamma_bar);
    let k = p.pitch_lift_ratio();
    let eta1 = GradientField::new(
        move |x: &DVector<f64>| (x[2] - x[1] - gb).sin() * (x[0] + vb),
        move |x: &DVector<f64>| {
            let (s, c) = (x[2] - x[1] - gb).sin_cos();
            let v = x[0] + vb;
            DVector::from_vec(vec![s, -v * c, v * c, 0.0])
        },
    );
    let eta2 = GradientField::new(
        move |x: &DVector<f64>| k * x[1] - x[3],
        move |_: &DVector<f64>| DVector::from_vec(vec![0.0, k, 0.0, -1.0]),
    );
    [Arc::new(eta1), Arc::new(eta2)]
}

pub fn diffeo_forward(p: &AircraftParams, r: &ReferenceSignal, x: &DVector<f64>) -> TransformedState {
    let eta1 = (x[2] - x[1] - r.gamma_bar).sin() * (x[0] + r.v_bar);
    let eta2 = p.pitch_lift_ratio() * x[1] - x[3];
    TransformedState {
        eta: Vector2::new(eta1, eta2),
        xi: Vector2::new(x[0], x[1]),
    }
}

pub fn diffeo_inverse(p: &AircraftParams, r: &ReferenceSignal, t: &TransformedState) -> Result<DVector<f64>, AircraftError> {
    let (eta1, eta2) = (t.eta[0], t.eta[1]);
    let (xi1, xi2) = (t.xi[0], t.xi[1]);
    let v = xi1 + r.v_bar;
    if !(v > 0.0) || !(eta1.abs() <= v) {
        return Err(AircraftError::ArcsinDomain { eta1, xi1, v_bar: r.v_bar });
    }
    Ok(DVector::from_vec(vec![
        xi1,
        xi2,
        (eta1 / v).asin() + xi2 + r.gamma_bar,
        p.pitch_lift_ratio() * xi2 - eta2,
    ]))
}

/// Internal dynamics on `ξ = 0` with constant references, in the closed form
/// obtained by substituting `x = T⁻¹(η, 0)` into `η' = L_f φ`. The pitch
/// moment enters with a single power of `V̄`.
pub fn zero_dynamics_rhs(p: &AircraftParams, r: &ReferenceSignal, eta: &Vector2<f64>) -> Result<Vector2<f64>, AircraftError> {
    let (e1, e2) = (eta[0], eta[1]);
    let vb = r.v_bar;
    if !(e1.abs() < vb) {
        return Err(AircraftError::ZeroDynamicsDomain { eta1: e1, v_bar: vb });
    }
    let s = (e1 / vb).asin();
    let root = (vb * vb - e1 * e1).sqrt();
    let lift = p.rho_air * vb * p.s / (2.0 * p.m);
    let (sg, cg) = r.gamma_bar.sin_cos();
    let eta1_dot = e1 * (-lift * (p.c_d0 + p.c_dalpha * s) - p.g * sg / vb - r.v_bar_dot / vb)
        + root * (-lift * (p.c_l0 + p.c_lalpha * s) + p.g * cg / vb + r.gamma_bar_dot - e2);
    let ratio = p.cbar * p.c_mdelta_e / (p.i_yy * p.c_ldelta_e);
    let eta2_dot = p.rho_air * vb * p.s * ratio / 2.0 * (p.c_l0 + p.c_lalpha * s)
        - p.m * p.g * ratio * cg / vb
        - p.m * ratio * r.gamma_bar_dot
        - p.rho_air * vb * p.s * p.cbar / (2.0 * p.i_yy) * (p.c_m0 + p.c_malpha * s);
    Ok(Vector2::new(eta1_dot, eta2_dot))
}

/// Equilibrium of [`zero_dynamics_rhs`]. The second equation is affine in
/// `asin(η1/V̄)`, which fixes `η1`; the first then fixes `η2`.
pub fn zero_dynamics_equilibrium(p: &AircraftParams, r: &ReferenceSignal) -> Result<Vector2<f64>, AircraftError> {
    let vb = r.v_bar;
    let ratio = p.cbar * p.c_mdelta_e / (p.i_yy * p.c_ldelta_e);
    let a = p.rho_air * vb * p.s * ratio / 2.0;
    let e = p.rho_air * vb * p.s * p.cbar / (2.0 * p.i_yy);
    let offset = a * p.c_l0 - p.m * p.g * ratio * r.gamma_bar.cos() / vb - p.m * ratio * r.gamma_bar_dot - e * p.c_m0;
    let slope = a * p.c_lalpha - e * p.c_malpha;
    let s = -offset / slope;
    if !(s.abs() < std::f64::consts::FRAC_PI_2) || !s.is_finite() {
        return Err(AircraftError::ZeroDynamicsDomain {
            eta1: vb * s.sin(),
            v_bar: vb,
        });
    }
    let e1 = vb * s.sin();
    let root = vb * s.cos();
    let lift = p.rho_air * vb * p.s / (2.0 * p.m);
    let (sg, cg) = r.gamma_bar.sin_cos();
    let first = e1 * (-lift * (p.c_d0 + p.c_dalpha * s) - p.g * sg / vb - r.v_bar_dot / vb);
    let e2 = first / root - lift * (p.c_l0 + p.c_lalpha * s) + p.g * cg / vb + r.gamma_bar_dot;
    Ok(Vector2::new(e1, e2))
}

/// Central-difference Jacobian of [`zero_dynamics_rhs`].
pub fn zero_dynamics_jacobian(p: &AircraftParams, r: &ReferenceSignal, eta: &Vector2<f64>) -> Result<Matrix2<f64>, AircraftError> {
    let mut jac = Matrix2::zeros();
    for i in 0..2 {
        let h = 1e-6 * eta[i].abs().max(1.0);
        let mut up = *eta;
        let mut down = *eta;
        up[i] += h;
        down[i] -= h;
        let col = (zero_dynamics_rhs(p, r, &up)? - zero_dynamics_rhs(p, r, &down)?) / (2.0 * h);
        jac.set_column(i, &col);
    }
    Ok(jac)
}

pub fn zero_dynamics_eigenvalues(p: &AircraftParams, r: &ReferenceSignal) -> Result<Vec<Complex<f64>>, AircraftError> {
    let eq = zero_dynamics_equilibrium(p, r)?;
    Ok(zero_dynamics_jacobian(p, r, &eq)?.complex_eigenvalues().iter().copied().collect())
}

/// Thrust and elevator that make `x1' = −K1 x1` and `x2' = −K2 x2` in the
/// two-output model, written out term by term:
///
/// ```text
/// F  = (½ρV²S C_D + m g sin γ + m V̄' − m K1 x1) / cos α
/// δe = tan α · (−C_D/C_Lδe − 2mg sin γ/(ρV²S C_Lδe) − 2mV̄'/(ρV²S C_Lδe) + 2mK1x1/(ρV²S C_Lδe))
///      − C_L(α)/C_Lδe + 2mg cos γ/(ρV²S C_Lδe) + 2mγ̄'/(ρVS C_Lδe) − 2mK2x2/(ρVS C_Lδe)
/// ```
/// with `V = x1 + V̄`, `γ = x2 + γ̄`, `α = x3 − x2 − γ̄`, `C_L(α)` without the
/// elevator term.
pub fn closed_form_two_output_control(
    p: &AircraftParams,
    r: &ReferenceSignal,
    x: &DVector<f64>,
    k1: f64,
    k2: f64,
) -> Result<ControlInput, AircraftError> {
    let v = x[0] + r.v_bar;
    let gam = x[1] + r.gamma_bar;
    let al = x[2] - x[1] - r.gamma_bar;
    let ca = al.cos();
    if !(v > 0.0) || ca.abs() < DEFAULT_COS_ALPHA_FLOOR {
        return Err(AircraftError::Singular {
            cos_alpha: ca,
            airspeed: v,
        });
    }
    let m = p.m;
    let cd = p.c_d0 + p.c_dalpha * al;
    let cl = p.c_l0 + p.c_lalpha * al;
    let q2 = p.rho_air * v * v * p.s * p.c_ldelta_e;
    let q1 = p.rho_air * v * p.s * p.c_ldelta_e;
    let thrust = (0.5 * p.rho_air * v * v * p.s * cd + m * p.g * gam.sin() + m * r.v_bar_dot - m * k1 * x[0]) / ca;
    let delta_e = al.tan() * (-cd / p.c_ldelta_e - 2.0 * m * p.g * gam.sin() / q2 - 2.0 * m * r.v_bar_dot / q2 + 2.0 * m * k1 * x[0] / q2)
        - cl / p.c_ldelta_e
        + 2.0 * m * p.g * gam.cos() / q2
        + 2.0 * m * r.gamma_bar_dot / q1
        - 2.0 * m * k2 * x[1] / q1;
    Ok(ControlInput::new(thrust, delta_e))
}
