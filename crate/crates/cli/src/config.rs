use std::fs;
use std::path::{Path, PathBuf};

use folin_core::aircraft::{AircraftParams, OutputSet, PitchChannel};
use folin_core::scenario::{GainSet, ScenarioSpec};
use folin_core::sim::SimConfig;
use folin_core::DEFAULT_PINV_TOL;
use serde::Deserialize;

use crate::CliError;

pub const SEED_CONFIG_ENV: &str = "FOLIN_SEED_CONFIG";
pub const DEFAULT_CONFIG_NAME: &str = "scenario.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TwoOutput,
    ThreeOutput,
}

impl From<Mode> for OutputSet {
    fn from(m: Mode) -> Self {
        match m {
            Mode::TwoOutput => OutputSet::Two,
            Mode::ThreeOutput => OutputSet::Three,
        }
    }
}

fn default_dt() -> f64 {
    SimConfig::default().dt
}

fn default_horizon() -> f64 {
    SimConfig::default().horizon
}

fn default_log_every() -> usize {
    SimConfig::default().log_every
}

fn default_pinv_tol() -> f64 {
    DEFAULT_PINV_TOL
}

/// Scenario file. `aircraft` and `output` resolve relative to the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub aircraft: PathBuf,
    pub mode: Mode,
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "V_cmd")]
    pub v_cmd: f64,
    #[serde(default)]
    pub altitude_note: Option<String>,
    #[serde(default)]
    pub gains: GainSet,
    /// rad
    #[serde(default)]
    pub pitch_bias: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_pinv_tol")]
    pub pinv_tol: f64,
    #[serde(default)]
    pub pitch_channel: PitchChannel,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub params: AircraftParams,
    pub base_dir: PathBuf,
}

/// `--config` wins; otherwise `$FOLIN_SEED_CONFIG/scenario.json`.
pub fn resolve_config_path(flag: Option<&Path>, seed_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    match (flag, seed_dir) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(dir)) => Ok(dir.join(DEFAULT_CONFIG_NAME)),
        (None, None) => Err(CliError::Usage(format!("no --config given and {SEED_CONFIG_ENV} is not set"))),
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario config: {e}")))
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let params = AircraftParams::load(base_dir.join(&config.aircraft)).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(LoadedConfig { config, params, base_dir })
}

impl LoadedConfig {
    pub fn spec(&self) -> Result<ScenarioSpec, CliError> {
        let c = &self.config;
        let mut spec = ScenarioSpec::nominal(self.params);
        spec.outputs = c.mode.into();
        spec.v0 = c.v0;
        spec.v_cmd = c.v_cmd;
        spec.gains = c.gains;
        spec.pitch_bias = c.pitch_bias;
        spec.pinv_tol = c.pinv_tol;
        spec.pitch_channel = c.pitch_channel;
        spec.sim = SimConfig {
            dt: c.dt,
            horizon: c.horizon,
            log_every: c.log_every,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(p) => p.to_path_buf(),
            None => self
                .base_dir
                .join(self.config.output.clone().unwrap_or_else(|| PathBuf::from("out"))),
        }
    }
}
