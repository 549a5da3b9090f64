use std::path::Path;

use folin_core::aircraft::{zero_dynamics_eigenvalues, zero_dynamics_equilibrium};
use folin_core::scenario::{run_scenario, write_trace_csv, GainSet, ScenarioRun, ScenarioSpec, ScenarioSummary};
use folin_core::sim::{simulate_zero_dynamics, SimError};
use folin_core::trim::{solve_trim, speed_grid, trim_sweep, write_trim_csv, TrimError};
use nalgebra::Vector2;
use rayon::prelude::*;

use crate::output::write_atomic;
use crate::CliError;

pub const TRIM_FILE: &str = "trim_sweep.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const ZERO_DYNAMICS_FILE: &str = "zero_dynamics.csv";
pub const GAIN_SUMMARY_FILE: &str = "gain_sweep_summary.csv";
pub const GAIN_SUMMARY_HEADER: &str = "run,k1,k2,k3,k4,status,settle_x1,settle_x2,settle_x3,V_err,gamma_err,theta_err,message";

/// A flight-path error above this at the final time is reported as a
/// persistent offset, rad.
pub const PATH_OFFSET_FLAG: f64 = 0.05 * std::f64::consts::PI / 180.0;

pub fn gain_run_file(index: usize) -> String {
    format!("gain_run_{index:03}.csv")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub log_every: Option<usize>,
    pub pinv_tol: Option<f64>,
    pub pitch_bias_deg: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) -> Result<(), CliError> {
        if let Some(dt) = self.dt {
            spec.sim.dt = dt;
        }
        if let Some(h) = self.horizon {
            spec.sim.horizon = h;
        }
        if let Some(n) = self.log_every {
            spec.sim.log_every = n;
        }
        if let Some(tol) = self.pinv_tol {
            spec.pinv_tol = tol;
        }
        if let Some(deg) = self.pitch_bias_deg {
            spec.pitch_bias = deg.to_radians();
        }
        spec.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn cmd_trim_sweep(spec: &ScenarioSpec, out: &Path, v_min: f64, v_max: f64, step: f64) -> Result<Vec<String>, CliError> {
    if !(v_min.is_finite() && v_max.is_finite() && step.is_finite()) || step <= 0.0 || v_min > v_max {
        return Err(CliError::Usage(format!("empty speed range [{v_min}, {v_max}] with step {step}")));
    }
    let speeds = speed_grid(v_min, v_max, step);
    if speeds.is_empty() {
        return Err(CliError::Usage("empty speed range".into()));
    }
    let points = trim_sweep(&spec.params, &speeds, spec.gamma, &spec.trim).map_err(|e| match e {
        TrimError::Sweep { index, v, source } => CliError::Run(format!("trim failed at V = {v} m/s (point {index}): {source}")),
        other => CliError::Run(other.to_string()),
    })?;
    let path = write_atomic(out, TRIM_FILE, |w| write_trim_csv(w, &points))?;
    let worst = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    let mut lines = vec![
        format!("wrote {} ({} points)", path.display(), points.len()),
        format!("max residual {worst:e}"),
    ];
    lines.extend(
        points
            .iter()
            .filter_map(|p| p.warning.as_ref().map(|w| format!("warning at V = {}: {w}", p.v))),
    );
    Ok(lines)
}

fn summary_line(s: &ScenarioSummary) -> String {
    let settle = |x: Option<f64>| x.map_or("not settled".to_string(), |t| format!("{t:.3} s"));
    format!(
        "T = {} s: V err {:e} m/s, gamma err {:e} rad, theta err {:e} rad; 2% settling x1 {}, x2 {}, x3 {}; max offdiag {:e}; singular samples {}",
        s.final_time,
        s.speed_error,
        s.path_angle_error,
        s.pitch_error,
        settle(s.settling[0]),
        settle(s.settling[1]),
        settle(s.settling[2]),
        s.max_offdiag,
        s.singular_samples
    )
}

fn write_run(out: &Path, name: &str, run: &ScenarioRun) -> Result<std::path::PathBuf, CliError> {
    write_atomic(out, name, |w| write_trace_csv(w, &run.trace))
}

pub fn cmd_simulate(spec: &ScenarioSpec, out: &Path) -> Result<Vec<String>, CliError> {
    let run = run_scenario(spec).map_err(|e| CliError::Run(e.to_string()))?;
    let path = write_run(out, TRACE_FILE, &run)?;
    let s = run.summary();
    let mut lines = vec![
        format!("wrote {} ({} rows)", path.display(), run.trace.rows.len()),
        format!(
            "trim: V0 = {} m/s theta = {} rad F = {} N; V_cmd = {} m/s theta = {} rad F = {} N",
            run.initial_trim.v,
            run.initial_trim.theta,
            run.initial_trim.thrust,
            run.command_trim.v,
            run.command_trim.theta,
            run.command_trim.thrust
        ),
        summary_line(&s),
    ];
    if spec.pitch_bias != 0.0 && s.path_angle_error.abs() > PATH_OFFSET_FLAG {
        lines.push(format!(
            "flight-path offset persists with pitch bias {} rad: gamma err {:e} rad",
            spec.pitch_bias, s.path_angle_error
        ));
    }
    match s.failure {
        Some(f) => Err(CliError::Run(format!(
            "simulation stopped early ({f}); partial trace kept in {}",
            path.display()
        ))),
        None => Ok(lines),
    }
}

pub fn gain_grid(base: GainSet, k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]) -> Vec<GainSet> {
    let or = |xs: &[f64], d: f64| if xs.is_empty() { vec![d] } else { xs.to_vec() };
    let mut grid = Vec::new();
    for &a in &or(k1, base.k1) {
        for &b in &or(k2, base.k2) {
            for &c in &or(k3, base.k3) {
                for &d in &or(k4, base.k4) {
                    grid.push(GainSet {
                        k1: a,
                        k2: b,
                        k3: c,
                        k4: d,
                    });
                }
            }
        }
    }
    grid
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// Runs every gain set in parallel; a failing run is recorded in the summary
/// and the sweep continues. Returns the report and the number of failures.
pub fn cmd_gain_sweep(spec: &ScenarioSpec, grid: &[GainSet], out: &Path) -> Result<(Vec<String>, usize), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty gain grid".into()));
    }
    for g in grid {
        g.validate(spec.outputs).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let rows: Vec<String> = grid
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let s = ScenarioSpec { gains: *g, ..spec.clone() };
            let head = format!("{i},{},{},{},{}", g.k1, g.k2, g.k3, g.k4);
            let result = run_scenario(&s).map_err(|e| e.to_string()).and_then(|run| {
                write_run(out, &gain_run_file(i), &run)
                    .map(|_| run.summary())
                    .map_err(|e| e.to_string())
            });
            match result {
                Ok(sum) => format!(
                    "{head},{},{},{},{},{},{},{},{}",
                    if sum.completed { "ok" } else { "failed" },
                    opt(sum.settling[0]),
                    opt(sum.settling[1]),
                    opt(sum.settling[2]),
                    sum.speed_error,
                    sum.path_angle_error,
                    sum.pitch_error,
                    sum.failure.unwrap_or_default().replace(',', ";")
                ),
                Err(msg) => format!("{head},failed,,,,,,,{}", msg.replace(',', ";")),
            }
        })
        .collect();
    let failures = rows.iter().filter(|r| r.split(',').nth(5) == Some("failed")).count();
    let path = write_atomic(out, GAIN_SUMMARY_FILE, |w| {
        writeln!(w, "{GAIN_SUMMARY_HEADER}")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    let lines = vec![format!("wrote {} ({} runs, {failures} failed)", path.display(), grid.len())];
    Ok((lines, failures))
}

pub fn cmd_zero_dynamics(
    spec: &ScenarioSpec,
    eta0: Option<Vector2<f64>>,
    perturb: Vector2<f64>,
    out: &Path,
) -> Result<Vec<String>, CliError> {
    let trim = solve_trim(&spec.params, spec.v_cmd, spec.gamma, None, &spec.trim)
        .map_err(|e| CliError::Run(format!("trim at V = {} m/s: {e}", spec.v_cmd)))?;
    let r = trim.reference();
    let eq = zero_dynamics_equilibrium(&spec.params, &r).map_err(|e| CliError::Run(e.to_string()))?;
    let eig = zero_dynamics_eigenvalues(&spec.params, &r).map_err(|e| CliError::Run(e.to_string()))?;
    let start = eta0.unwrap_or(eq) + perturb;
    let cfg = spec.sim;
    let trace = simulate_zero_dynamics(&spec.params, &r, &start, &cfg).map_err(|e| match e {
        SimError::Precondition(_) => CliError::Usage(e.to_string()),
        _ => CliError::Run(e.to_string()),
    })?;
    let path = write_atomic(out, ZERO_DYNAMICS_FILE, |w| {
        writeln!(w, "t,eta1,eta2")?;
        for (t, e) in trace.t.iter().zip(&trace.eta) {
            writeln!(w, "{t},{},{}", e[0], e[1])?;
        }
        Ok(())
    })?;
    let eig_text: Vec<String> = eig.iter().map(|l| format!("{}{:+}i", l.re, l.im)).collect();
    let unstable = eig.iter().any(|l| l.re > 0.0);
    Ok(vec![
        format!("wrote {} ({} rows)", path.display(), trace.t.len()),
        format!("equilibrium at V_bar = {} m/s: eta1 = {}, eta2 = {}", r.v_bar, eq[0], eq[1]),
        format!(
            "jacobian eigenvalues: {} ({})",
            eig_text.join(", "),
            if unstable { "unstable" } else { "stable" }
        ),
        match trace.divergence_time {
            Some(t) => format!("diverged at t = {t} s (max offset {:e})", trace.max_offset(&eq)),
            None => format!("no divergence within {} s (max offset {:e})", cfg.horizon, trace.max_offset(&eq)),
        },
    ])
}
