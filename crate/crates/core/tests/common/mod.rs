#![allow(dead_code)]

use folin_core::aircraft::{AircraftParams, OutputSet, ReferenceSignal};
use folin_core::trim::{solve_trim, TrimOptions, TrimPoint};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn params() -> AircraftParams {
    AircraftParams::wide_body_reconstructed()
}

pub fn trim_at(v: f64) -> TrimPoint {
    solve_trim(&params(), v, 0.0, None, &TrimOptions::default()).expect("shipped parameters trim")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Error-coordinate state with |V − V̄| ≤ 50 m/s, |γ − γ̄| ≤ 0.1, |α| ≤ 0.3, |q| ≤ 0.1.
pub fn random_state(rng: &mut ChaCha8Rng, set: OutputSet, r: &ReferenceSignal) -> DVector<f64> {
    let x1 = rng.random_range(-50.0..50.0);
    let x2 = rng.random_range(-0.1..0.1);
    let alpha: f64 = rng.random_range(-0.3..0.3);
    let x4 = rng.random_range(-0.1..0.1);
    let theta = alpha + x2 + r.gamma_bar;
    let x3 = match set {
        OutputSet::Two => theta,
        OutputSet::Three => theta - r.theta_bar,
    };
    DVector::from_vec(vec![x1, x2, x3, x4])
}

pub fn random_states(seed: u64, n: usize, set: OutputSet, r: &ReferenceSignal) -> Vec<DVector<f64>> {
    let mut g = rng(seed);
    (0..n).map(|_| random_state(&mut g, set, r)).collect()
}

/// |a − b| ≤ tol·|b| component-wise, with an absolute floor for exact zeros.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300) || (a - b).abs() <= 1e-14
}
