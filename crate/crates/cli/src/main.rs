mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use thiserror::Error;

use commands::Overrides;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "folin",
    version,
    about = "Feedback-linearization experiments on a longitudinal aircraft model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; defaults to scenario.json in $FOLIN_SEED_CONFIG
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = config::SEED_CONFIG_ENV, hide = true)]
    seed_config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output` entry
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Keep every n-th integration step in the trace
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    pinv_tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pitch_bias_deg: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Trim inputs and pitch over a speed range
    TrimSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 150.0)]
        v_min: f64,
        #[arg(long, default_value_t = 300.0)]
        v_max: f64,
        #[arg(long, default_value_t = 10.0)]
        v_step: f64,
    },
    /// Closed-loop speed-change scenario
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Scenario over a grid of outer-loop gains
    GainSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        k1: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        k2: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        k3: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        k4: Vec<f64>,
    },
    /// Internal dynamics of the two-output design with the outputs held at zero
    ZeroDynamics {
        #[command(flatten)]
        common: Common,
        /// Initial internal state `eta1,eta2`; defaults to the equilibrium
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        eta0: Option<Vec<f64>>,
        /// Offset added to the initial internal state, `d1,d2`
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        perturb: Option<Vec<f64>>,
    },
}

struct Prepared {
    spec: folin_core::scenario::ScenarioSpec,
    out: PathBuf,
}

fn prepare(c: &Common) -> Result<Prepared, CliError> {
    let path = config::resolve_config_path(c.config.as_deref(), c.seed_config.as_deref())?;
    let loaded = config::load(&path)?;
    let mut spec = loaded.spec()?;
    Overrides {
        dt: c.dt,
        horizon: c.horizon,
        log_every: c.log_every,
        pinv_tol: c.pinv_tol,
        pitch_bias_deg: c.pitch_bias_deg,
    }
    .apply(&mut spec)?;
    Ok(Prepared {
        spec,
        out: loaded.output_dir(c.out.as_deref()),
    })
}

fn pair(flag: &str, v: Option<Vec<f64>>) -> Result<Option<Vector2<f64>>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some([a, b]) => Ok(Some(Vector2::new(*a, *b))),
        Some(other) => Err(CliError::Usage(format!("--{flag} takes two values, got {}", other.len()))),
    }
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::TrimSweep {
            common,
            v_min,
            v_max,
            v_step,
        } => {
            let p = prepare(&common)?;
            commands::cmd_trim_sweep(&p.spec, &p.out, v_min, v_max, v_step)
        }
        Command::Simulate { common } => {
            let p = prepare(&common)?;
            commands::cmd_simulate(&p.spec, &p.out)
        }
        Command::GainSweep { common, k1, k2, k3, k4 } => {
            let p = prepare(&common)?;
            let grid = commands::gain_grid(p.spec.gains, &k1, &k2, &k3, &k4);
            let (lines, failures) = commands::cmd_gain_sweep(&p.spec, &grid, &p.out)?;
            if failures > 0 {
                return Err(CliError::Run(format!("{} ({failures} runs failed)", lines.join("; "))));
            }
            Ok(lines)
        }
        Command::ZeroDynamics { common, eta0, perturb } => {
            let p = prepare(&common)?;
            let eta0 = pair("eta0", eta0)?;
            let perturb = pair("perturb", perturb)?.unwrap_or_else(Vector2::zeros);
            commands::cmd_zero_dynamics(&p.spec, eta0, perturb, &p.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("folin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
