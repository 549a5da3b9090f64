use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("cannot read parameter file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed parameter set: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid parameter {name} = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Rigid-body, atmosphere and aerodynamic data, SI units, angles in radians.
/// JSON keys match the field names below exactly; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftParams {
    pub m: f64,
    pub g: f64,
    pub rho_air: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub cbar: f64,
    #[serde(rename = "I_yy")]
    pub i_yy: f64,
    #[serde(rename = "C_L0")]
    pub c_l0: f64,
    #[serde(rename = "C_Lalpha")]
    pub c_lalpha: f64,
    #[serde(rename = "C_Ldelta_e")]
    pub c_ldelta_e: f64,
    #[serde(rename = "C_D0")]
    pub c_d0: f64,
    #[serde(rename = "C_Dalpha")]
    pub c_dalpha: f64,
    #[serde(rename = "C_m0")]
    pub c_m0: f64,
    #[serde(rename = "C_malpha")]
    pub c_malpha: f64,
    #[serde(rename = "C_mdelta_e")]
    pub c_mdelta_e: f64,
}

impl AircraftParams {
    /// Representative twin-aisle transport at cruise, 10 000 m ISA density.
    /// Reconstructed from public data; not the values of any particular
    /// certified aircraft model.
    pub fn wide_body_reconstructed() -> Self {
        Self {
            m: 2.0e5,
            g: 9.81,
            rho_air: 0.4135,
            s: 361.6,
            cbar: 7.26,
            i_yy: 2.0e7,
            c_l0: 0.25,
            c_lalpha: 5.6,
            c_ldelta_e: 0.35,
            c_d0: 0.022,
            c_dalpha: 0.25,
            c_m0: 0.05,
            c_malpha: -1.0,
            c_mdelta_e: -1.5,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ParamsError> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParamsError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let all = [
            ("m", self.m),
            ("g", self.g),
            ("rho_air", self.rho_air),
            ("S", self.s),
            ("cbar", self.cbar),
            ("I_yy", self.i_yy),
            ("C_L0", self.c_l0),
            ("C_Lalpha", self.c_lalpha),
            ("C_Ldelta_e", self.c_ldelta_e),
            ("C_D0", self.c_d0),
            ("C_Dalpha", self.c_dalpha),
            ("C_m0", self.c_m0),
            ("C_malpha", self.c_malpha),
            ("C_mdelta_e", self.c_mdelta_e),
        ];
        for (name, value) in all {
            if !value.is_finite() {
                return Err(ParamsError::Invalid {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        for (name, value) in [
            ("m", self.m),
            ("rho_air", self.rho_air),
            ("S", self.s),
            ("cbar", self.cbar),
            ("I_yy", self.i_yy),
        ] {
            if value <= 0.0 {
                return Err(ParamsError::Invalid {
                    name,
                    value,
                    reason: "must be strictly positive",
                });
            }
        }
        if self.g < 0.0 {
            return Err(ParamsError::Invalid {
                name: "g",
                value: self.g,
                reason: "must be non-negative",
            });
        }
        for (name, value) in [("C_Ldelta_e", self.c_ldelta_e), ("C_mdelta_e", self.c_mdelta_e)] {
            if value == 0.0 {
                return Err(ParamsError::Invalid {
                    name,
                    value,
                    reason: "elevator effectiveness must be nonzero",
                });
            }
        }
        Ok(())
    }

    /// `½ ρ S`, so that `L = q_s V² C_L`.
    pub fn half_rho_s(&self) -> f64 {
        0.5 * self.rho_air * self.s
    }

    /// `m c̄ C_mδe / (I_yy C_Lδe)`, the coefficient of `x2` in the second internal coordinate.
    pub fn pitch_lift_ratio(&self) -> f64 {
        self.m * self.cbar * self.c_mdelta_e / (self.i_yy * self.c_ldelta_e)
    }
}
