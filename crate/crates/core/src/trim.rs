//! Steady level (or constant flight-path) equilibria: given `V` and `γ`, find
//! `(θ, F, δe)` with `V' = γ' = q' = 0` and `q = 0`.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::aircraft::{dynamics_rhs, AircraftParams, ControlInput, FlightState, ReferenceSignal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrimError {
    #[error("trim airspeed {v} m/s is not positive")]
    NonPositiveAirspeed { v: f64 },
    #[error("trim did not converge after {iterations} iterations (scaled residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trim sweep failed at index {index} (V = {v} m/s): {source}")]
    Sweep {
        index: usize,
        v: f64,
        #[source]
        source: Box<TrimError>,
    },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimGuess {
    pub theta: f64,
    pub thrust: f64,
    pub delta_e: f64,
}

impl TrimGuess {
    /// Cruise ballpark: θ = 0.03 rad, F = 5 % of weight, neutral elevator.
    pub fn heuristic(p: &AircraftParams) -> Self {
        Self {
            theta: 0.03,
            thrust: 0.05 * p.m * p.g,
            delta_e: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimOptions {
    /// Bound on both the raw and the nondimensional residual max-norms.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrimOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimPoint {
    pub v: f64,
    pub gamma: f64,
    pub theta: f64,
    pub thrust: f64,
    pub delta_e: f64,
    /// Max-norm of `(V', γ', θ', q')` at the point.
    pub residual: f64,
    /// Newton updates taken.
    pub iterations: usize,
    pub warning: Option<String>,
}

impl TrimPoint {
    pub fn state(&self) -> FlightState {
        FlightState::new(self.v, self.gamma, self.theta, 0.0)
    }

    pub fn input(&self) -> ControlInput {
        ControlInput::new(self.thrust, self.delta_e)
    }

    pub fn guess(&self) -> TrimGuess {
        TrimGuess {
            theta: self.theta,
            thrust: self.thrust,
            delta_e: self.delta_e,
        }
    }

    pub fn reference(&self) -> ReferenceSignal {
        ReferenceSignal::constant(self.v, self.gamma, self.theta)
    }
}

struct Problem<'a> {
    p: &'a AircraftParams,
    v: f64,
    gamma: f64,
    weight: f64,
}

impl Problem<'_> {
    // z = (θ, F/mg, δe)
    fn raw(&self, z: &Vector3<f64>) -> [f64; 4] {
        let s = FlightState::new(self.v, self.gamma, z[0], 0.0);
        let u = ControlInput::new(z[1] * self.weight, z[2]);
        let r = dynamics_rhs(self.p, &s, &u).expect("airspeed checked positive");
        [r.v_dot, r.gamma_dot, r.theta_dot, r.q_dot]
    }

    /// `[V'/g, γ' V/g, q' I_yy/(q̄ S c̄)]`.
    fn scaled(&self, z: &Vector3<f64>) -> Vector3<f64> {
        let r = self.raw(z);
        let p = self.p;
        let g = p.g.max(1.0);
        let moment_scale = p.i_yy / (p.half_rho_s() * self.v * self.v * p.cbar);
        Vector3::new(r[0] / g, r[1] * self.v / g, r[3] * moment_scale)
    }

    fn jacobian(&self, z: &Vector3<f64>) -> Matrix3<f64> {
        let mut j = Matrix3::zeros();
        for i in 0..3 {
            let h = 1e-6 * z[i].abs().max(1.0);
            let mut up = *z;
            let mut down = *z;
            up[i] += h;
            down[i] -= h;
            j.set_column(i, &((self.scaled(&up) - self.scaled(&down)) / (2.0 * h)));
        }
        j
    }

    fn converged(&self, z: &Vector3<f64>, tol: f64) -> bool {
        let raw = self.raw(z).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        raw <= tol && self.scaled(z).amax() <= tol
    }
}

/// Damped Newton with central-difference Jacobian and backtracking on the
/// nondimensional residual.
pub fn solve_trim(p: &AircraftParams, v: f64, gamma: f64, guess: Option<TrimGuess>, opts: &TrimOptions) -> Result<TrimPoint, TrimError> {
    if !(v > 0.0) {
        return Err(TrimError::NonPositiveAirspeed { v });
    }
    let weight = p.m * p.g.max(1.0);
    let prob = Problem { p, v, gamma, weight };
    let g0 = guess.unwrap_or_else(|| TrimGuess::heuristic(p));
    let mut z = Vector3::new(g0.theta, g0.thrust / weight, g0.delta_e);
    let mut iterations = 0;
    while !prob.converged(&z, opts.tol) {
        if iterations >= opts.max_iter {
            return Err(TrimError::NoConvergence {
                iterations,
                residual: prob.scaled(&z).amax(),
            });
        }
        let r = prob.scaled(&z);
        let step = prob.jacobian(&z).lu().solve(&(-r)).ok_or(TrimError::NoConvergence {
            iterations,
            residual: r.amax(),
        })?;
        let norm0 = r.norm();
        let mut lambda = 1.0;
        let mut next = z + step;
        for _ in 0..30 {
            let n = prob.scaled(&next).norm();
            if n.is_finite() && n < norm0 {
                break;
            }
            lambda *= 0.5;
            next = z + step * lambda;
        }
        z = next;
        iterations += 1;
    }
    let raw = prob.raw(&z);
    let thrust = z[1] * weight;
    let warning = (thrust < 0.0).then(|| format!("negative trim thrust {thrust:.3} N at V = {v} m/s"));
    Ok(TrimPoint {
        v,
        gamma,
        theta: z[0],
        thrust,
        delta_e: z[2],
        residual: raw.iter().fold(0.0f64, |m, c| m.max(c.abs())),
        iterations,
        warning,
    })
}

/// Continuation over ascending airspeeds, each solve seeded by the previous trim.
pub fn trim_sweep(p: &AircraftParams, speeds: &[f64], gamma: f64, opts: &TrimOptions) -> Result<Vec<TrimPoint>, TrimError> {
    if speeds.is_empty() {
        return Err(TrimError::InvalidSweep("airspeed list is empty".into()));
    }
    if speeds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TrimError::InvalidSweep("airspeeds must be strictly ascending".into()));
    }
    let mut out: Vec<TrimPoint> = Vec::with_capacity(speeds.len());
    for (index, &v) in speeds.iter().enumerate() {
        let seed = out.last().map(TrimPoint::guess);
        let point = solve_trim(p, v, gamma, seed, opts).map_err(|e| TrimError::Sweep {
            index,
            v,
            source: Box::new(e),
        })?;
        out.push(point);
    }
    Ok(out)
}

/// Inclusive grid `v_min, v_min + step, …` up to `v_max` (with a small slack
/// against rounding).
pub fn speed_grid(v_min: f64, v_max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || v_max < v_min {
        return Vec::new();
    }
    let n = ((v_max - v_min) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| v_min + i as f64 * step).collect()
}

pub const TRIM_CSV_HEADER: &str = "V,gamma,theta,F,delta_e,residual";

pub fn write_trim_csv<W: Write>(mut w: W, points: &[TrimPoint]) -> std::io::Result<()> {
    writeln!(w, "{TRIM_CSV_HEADER}")?;
    for t in points {
        writeln!(w, "{},{},{},{},{},{}", t.v, t.gamma, t.theta, t.thrust, t.delta_e, t.residual)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> AircraftParams {
        AircraftParams::wide_body_reconstructed()
    }

    #[test]
    fn solved_point_is_an_equilibrium() {
        let p = params();
        let t = solve_trim(&p, 200.0, 0.0, None, &TrimOptions::default()).unwrap();
        let r = dynamics_rhs(&p, &t.state(), &t.input()).unwrap();
        assert!(r.to_vector4().amax() < 1e-9);
        assert!(t.residual < 1e-9);
        assert!(t.warning.is_none());
        assert_relative_eq!(t.theta, 0.0729, epsilon = 1e-3);
    }

    #[test]
    fn elevator_from_moment_balance_when_alpha_drops_out() {
        let mut p = params();
        p.c_malpha = 0.0;
        let t = solve_trim(&p, 200.0, 0.0, None, &TrimOptions::default()).unwrap();
        assert_relative_eq!(t.delta_e, -p.c_m0 / p.c_mdelta_e, epsilon = 1e-12);

        // choose C_L0 so that α = 0 trims with neutral elevator
        let mut q = params();
        q.c_m0 = 0.0;
        q.c_malpha = 0.0;
        q.c_l0 = q.m * q.g / (q.half_rho_s() * 200.0 * 200.0);
        let t0 = solve_trim(&q, 200.0, 0.0, None, &TrimOptions::default()).unwrap();
        assert_relative_eq!(t0.delta_e, 0.0, epsilon = 1e-12);
        assert_relative_eq!(t0.theta, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn resolving_from_solution_takes_no_steps() {
        let p = params();
        let opts = TrimOptions::default();
        let t = solve_trim(&p, 250.0, 0.0, None, &opts).unwrap();
        let again = solve_trim(&p, 250.0, 0.0, Some(t.guess()), &opts).unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn non_positive_airspeed() {
        assert!(matches!(
            solve_trim(&params(), 0.0, 0.0, None, &TrimOptions::default()),
            Err(TrimError::NonPositiveAirspeed { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let opts = TrimOptions { tol: 1e-9, max_iter: 1 };
        match solve_trim(&params(), 200.0, 0.0, None, &opts) {
            Err(TrimError::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn sweep_properties() {
        let p = params();
        let grid = speed_grid(150.0, 300.0, 10.0);
        assert_eq!(grid.len(), 16);
        let pts = trim_sweep(&p, &grid, 0.0, &TrimOptions::default()).unwrap();
        assert!(pts.iter().all(|t| t.residual < 1e-9));
        for w in pts.windows(2) {
            assert!((w[1].theta - w[0].theta).abs() < 0.05);
            assert!((w[1].delta_e - w[0].delta_e).abs() < 0.05);
        }
        let single = trim_sweep(&p, &[230.0], 0.0, &TrimOptions::default()).unwrap();
        let direct = solve_trim(&p, 230.0, 0.0, None, &TrimOptions::default()).unwrap();
        assert_eq!(single[0], direct);
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let p = params();
        assert!(matches!(
            trim_sweep(&p, &[], 0.0, &TrimOptions::default()),
            Err(TrimError::InvalidSweep(_))
        ));
        assert!(trim_sweep(&p, &[200.0, 190.0], 0.0, &TrimOptions::default()).is_err());
        match trim_sweep(&p, &[150.0, -1.0 + 200.0, 250.0], 0.0, &TrimOptions { tol: 1e-9, max_iter: 0 }) {
            Err(TrimError::Sweep { index, .. }) => assert_eq!(index, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_layout() {
        let p = params();
        let pts = trim_sweep(&p, &[200.0, 210.0], 0.0, &TrimOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trim_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], TRIM_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let theta: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(theta, pts[0].theta);
    }
}
