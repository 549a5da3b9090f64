mod common;

use approx::assert_relative_eq;
use folin_core::affine::{lie_f, lie_g, AffineSystem, RelativeDegreeProfile};
use folin_core::aircraft::*;
use folin_core::iol::LinearizingController;
use folin_core::scenario::*;
use folin_core::sim::*;
use nalgebra::{dvector, DMatrix, DVector, Vector2};

use common::*;

fn nominal(horizon: f64) -> ScenarioSpec {
    let mut s = ScenarioSpec::nominal(params());
    s.sim.horizon = horizon;
    s
}

#[test]
fn identical_configs_give_identical_traces() {
    let s = nominal(20.0);
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn halving_the_step_barely_moves_the_terminal_state() {
    let coarse = run_scenario(&nominal(30.0)).unwrap();
    let mut fine_spec = nominal(30.0);
    fine_spec.sim.dt = 5e-4;
    fine_spec.sim.log_every = 20;
    let fine = run_scenario(&fine_spec).unwrap();
    let a = coarse.trace.last().unwrap().state.to_vector();
    let b = fine.trace.last().unwrap().state.to_vector();
    assert!((&a - &b).norm() < 1e-6 * b.norm(), "{a} vs {b}");
    assert_eq!(coarse.trace.last().unwrap().t, fine.trace.last().unwrap().t);
}

#[test]
fn zero_command_at_trim_holds_the_equilibrium() {
    let p = params();
    let t = trim_at(200.0);
    let r = t.reference();
    let ctrl = build_controller(&p, &r, OutputSet::Three, PitchChannel::Physical, 1e-12).unwrap();
    let plant = AircraftPlant {
        params: p,
        reference: r,
        outputs: OutputSet::Three,
    };
    let zero = |_t: f64, _xi: &DVector<f64>| DVector::zeros(3);
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 20.0,
        log_every: 100,
    };
    let s0 = t.state().to_vector();
    let trace = simulate_closed_loop(&plant, &ctrl, &zero, &s0, &cfg).unwrap();
    assert!(trace.completed());
    for s in &trace.samples {
        assert!((&s.plant_state - &s0).amax() < 1e-9);
        assert_relative_eq!(s.control.u[0], t.thrust, max_relative = 1e-8);
    }
}

#[test]
fn unbiased_pitch_run_is_the_nominal_run() {
    let s = nominal(5.0);
    let a = run_scenario(&s).unwrap();
    let b = run_incorrect_pitch_scenario(&s, 0.0).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn pitch_bias_sign_sets_the_flight_path_offset_sign() {
    let s = nominal(60.0);
    let up = run_incorrect_pitch_scenario(&s, 0.5f64.to_radians()).unwrap().summary();
    let down = run_incorrect_pitch_scenario(&s, -0.5f64.to_radians()).unwrap().summary();
    assert!(up.path_angle_error > 1e-3, "{up:?}");
    assert!(down.path_angle_error < -1e-3, "{down:?}");
    assert!(up.speed_error.abs() < 0.5 && down.speed_error.abs() < 0.5);
}

// With no drag and no thrust, ½V² + g·h is conserved (h' = V sin γ).
#[test]
fn energy_is_conserved_without_drag_or_thrust() {
    let mut p = params();
    p.c_d0 = 0.0;
    p.c_dalpha = 0.0;
    let u = ControlInput::new(0.0, -0.01);
    let rhs = |_t: f64, s: &DVector<f64>| {
        let fs = FlightState::from_slice(&s.as_slice()[..4]);
        let d = dynamics_rhs(&p, &fs, &u).map_err(SimError::from)?;
        Ok(dvector![d.v_dot, d.gamma_dot, d.theta_dot, d.q_dot, fs.v * fs.gamma.sin()])
    };
    let s0 = dvector![200.0, 0.0, 0.05, 0.0, 0.0];
    let xs = integrate(rhs, &s0, 1e-2, 30.0).unwrap();
    let energy = |s: &DVector<f64>| 0.5 * s[0] * s[0] + p.g * s[4];
    let e0 = energy(&s0);
    let drift = xs.iter().map(|s| (energy(s) - e0).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-8 * e0, "energy drift {drift}");
    // and the trajectory is not trivial
    assert!(xs.iter().any(|s| (s[0] - 200.0).abs() > 1.0));
}

// Along a two-output closed-loop trajectory the internal coordinates move as
// η' = L_f φ + L_g φ · u; the input term does not vanish.
#[test]
fn internal_coordinate_rates_along_two_output_trajectory() {
    // the two-output loop leaves its internal states unchecked, so keep the step small and the run short
    let mut s = nominal(1.0);
    s.outputs = OutputSet::Two;
    s.v0 = 248.0;
    s.sim.log_every = 1;
    let run = run_scenario(&s).unwrap();
    assert!(run.trace.completed());
    let p = params();
    let r = run.reference;
    let sys = build_two_output_system(&p, &r);
    let fields = eta_fields(&p, &r);
    let rows = &run.trace.rows;
    let dt = s.sim.dt;
    let eta = |k: usize| diffeo_forward(&p, &r, &DVector::from_row_slice(&rows[k].x)).eta;
    let mut max_input_term = 0.0f64;
    for k in (2..rows.len() - 2).step_by(37) {
        let rate = (eta(k - 2) - 8.0 * eta(k - 1) + 8.0 * eta(k + 1) - eta(k + 2)) / (12.0 * dt);
        let x = DVector::from_row_slice(&rows[k].x);
        let u = dvector![rows[k].thrust, rows[k].delta_e];
        for i in 0..2 {
            let lf = lie_f(&sys, fields[i].as_ref(), &x).unwrap();
            let lg = (lie_g(&sys, fields[i].as_ref(), &x).unwrap() * &u)[0];
            assert!(
                (rate[i] - lf - lg).abs() < 1e-5 * (1.0 + rate[i].abs()),
                "k = {k}, i = {i}: {} vs {}",
                rate[i],
                lf + lg
            );
            max_input_term = max_input_term.max(lg.abs());
        }
    }
    assert!(max_input_term > 1e-3);
}

#[test]
fn zero_dynamics_leave_their_equilibrium() {
    let p = params();
    let r = trim_at(250.0).reference();
    let eq = zero_dynamics_equilibrium(&p, &r).unwrap();
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 120.0,
        log_every: 100,
    };
    let at_eq = simulate_zero_dynamics(&p, &r, &eq, &cfg).unwrap();
    let early: Vec<_> = at_eq.t.iter().zip(&at_eq.eta).filter(|(t, _)| **t <= 10.0).collect();
    assert!(early.iter().all(|(_, e)| (*e - eq).norm() < 1e-6));
    let perturbed = eq + Vector2::new(1e-3, 0.0);
    let run = simulate_zero_dynamics(&p, &r, &perturbed, &cfg).unwrap();
    assert!(run.max_offset(&eq) > 1e-2);
    assert!(run.diverged);
    assert!(run.divergence_time.unwrap() < cfg.horizon);
    let bad = Vector2::new(r.v_bar, 0.0);
    assert!(matches!(simulate_zero_dynamics(&p, &r, &bad, &cfg), Err(SimError::Precondition(_))));
}

#[test]
fn square_loop_output_rate_equals_command() {
    let p = params();
    let r = trim_at(230.0).reference();
    let sys = build_two_output_system(&p, &r);
    let profile = verify_aircraft_profile(&sys, OutputSet::Two, &r, 1e-9).unwrap().profile;
    let ctrl = LinearizingController::new(sys.clone(), profile, 1e-12).unwrap();
    let v = dvector![0.3, -0.02];
    let dt = 1e-3;
    for x in random_states(21, 10, OutputSet::Two, &r) {
        let next = rk4_step(
            |_t, s: &DVector<f64>| {
                let u = ctrl.control(s, &v)?;
                Ok(sys.rhs(s, &u).map_err(folin_core::iol::IolError::from)?)
            },
            0.0,
            &x,
            dt,
        )
        .unwrap();
        let rate = (next.rows(0, 2) - x.rows(0, 2)) / dt;
        assert_relative_eq!(rate[0], v[0], max_relative = 1e-8);
        assert_relative_eq!(rate[1], v[1], max_relative = 1e-6);
    }
}

fn toy_controller(sys: AffineSystem) -> LinearizingController {
    let mut profile = RelativeDegreeProfile::new(vec![1]);
    profile.verified_at = vec![dvector![0.0]];
    LinearizingController::new(sys, profile, 1e-12).unwrap()
}

#[test]
fn singular_samples_are_flagged_and_the_run_continues() {
    let sys = AffineSystem::new(1, 1, 1, |_| dvector![0.0], |_| DMatrix::from_element(1, 1, 1.0), |x| x.clone())
        .with_singularity_monitor(|x| (x[0] > 0.5).then(|| "past the marker".to_string()));
    let ctrl = toy_controller(sys.clone());
    let one = |_t: f64, _xi: &DVector<f64>| dvector![1.0];
    let cfg = SimConfig {
        dt: 1e-2,
        horizon: 1.0,
        log_every: 1,
    };
    let trace = simulate_closed_loop(&AffinePlant(sys), &ctrl, &one, &dvector![0.0], &cfg).unwrap();
    assert!(trace.completed());
    assert_eq!(trace.samples.len(), 101);
    let flagged = trace.singular_samples();
    assert!((49..=51).contains(&flagged), "{flagged}");
    assert_relative_eq!(trace.last().unwrap().plant_state[0], 1.0, epsilon = 1e-10);
}

#[test]
fn failures_return_the_partial_trace() {
    let sys = AffineSystem::new(
        1,
        1,
        1,
        |x| dvector![if x[0] > 0.5 { f64::NAN } else { 0.0 }],
        |_| DMatrix::from_element(1, 1, 1.0),
        |x| x.clone(),
    );
    let ctrl = toy_controller(sys.clone());
    let one = |_t: f64, _xi: &DVector<f64>| dvector![1.0];
    let cfg = SimConfig {
        dt: 1e-2,
        horizon: 1.0,
        log_every: 1,
    };
    let trace = simulate_closed_loop(&AffinePlant(sys), &ctrl, &one, &dvector![0.0], &cfg).unwrap();
    let failure = trace.failure.clone().unwrap();
    assert!(failure.t > 0.45 && failure.t < 0.52, "{failure:?}");
    assert!(!trace.samples.is_empty());
    assert!(trace.samples.iter().all(|s| s.plant_state[0] <= 0.5 + 1e-12));
}

#[test]
fn coarse_steps_are_refused_by_the_design_guard() {
    let mut s = nominal(10.0);
    s.sim.dt = 0.05;
    assert!(matches!(run_scenario(&s), Err(ScenarioError::Sim(SimError::Config(_)))));
}

fn settling_for(k1: f64) -> [Option<f64>; 3] {
    let mut s = nominal(120.0);
    s.gains.k1 = k1;
    run_scenario(&s).unwrap().summary().settling
}

#[test]
fn speed_gain_sets_speed_settling_without_moving_pitch() {
    let runs: Vec<_> = [-0.25, -0.5, -1.0].into_iter().map(settling_for).collect();
    let x1: Vec<f64> = runs.iter().map(|s| s[0].unwrap()).collect();
    assert!(x1[0] > x1[1] && x1[1] > x1[2], "{x1:?}");
    let x3: Vec<f64> = runs.iter().map(|s| s[2].unwrap()).collect();
    for v in &x3 {
        assert!((v - x3[1]).abs() < 0.2 * x3[1], "{x3:?}");
    }
}

#[test]
#[ignore = "flight-path settling on the shipped parameters depends on the speed gain (lift couples through airspeed); kept to document the gap"]
fn speed_gain_leaves_flight_path_settling_unchanged() {
    let runs: Vec<_> = [-0.25, -0.5, -1.0].into_iter().map(settling_for).collect();
    let x2: Vec<f64> = runs.iter().map(|s| s[1].unwrap()).collect();
    for v in &x2 {
        assert!((v - x2[1]).abs() < 0.2 * x2[1], "{x2:?}");
    }
}
