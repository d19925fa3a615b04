//! Run configuration: the JSON document accepted by the CLI and the
//! resolved engine settings derived from it.

use crate::adapt::SwitchPolicy;
use crate::error::{Error, Result};
use crate::kernel::KernelKind;
use serde::{Deserialize, Serialize};

/// Target sequence family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "da")]
    Da,
    #[serde(rename = "dt")]
    Dt,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "da" => Ok(Mode::Da),
            "dt" => Ok(Mode::Dt),
            other => Err(Error::invalid(format!("unknown mode `{other}` (expected da|dt)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Da => "DA",
            Mode::Dt => "DT",
        })
    }
}

/// The JSON run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub mode: Mode,
    pub default_kernel: KernelKind,
    #[serde(rename = "N_theta")]
    pub n_theta: usize,
    #[serde(rename = "Nx_pmmh")]
    pub nx_pmmh: usize,
    pub r: f64,
    pub switch_policy: SwitchPolicy,
    pub seed: u64,
    #[serde(default)]
    pub data_path: Option<String>,
    #[serde(default)]
    pub k_mala: Option<usize>,
    #[serde(default)]
    pub k_test: Option<usize>,
    /// Lagged observation at t = 1 for the SV-in-mean model.
    #[serde(default)]
    pub y0: Option<f64>,
    /// Covariate dimension for the AR(1) model (when simulating).
    #[serde(default)]
    pub d_beta: Option<usize>,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn nx_pg(&self) -> usize {
        ((self.r * self.nx_pmmh as f64).round() as usize).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.parse::<crate::model::ModelKind>()?;
        if self.n_theta < 2 {
            return Err(Error::invalid("N_theta must be at least 2"));
        }
        if self.nx_pmmh < 2 {
            return Err(Error::invalid("Nx_pmmh must be at least 2"));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::invalid(format!("r must lie in (0, 1], got {}", self.r)));
        }
        if self.mode == Mode::Dt
            && self.default_kernel == KernelKind::Pmmh
            && self.switch_policy != SwitchPolicy::Never
        {
            return Err(Error::invalid(
                "density tempering with a PMMH default kernel does not support switching \
                 (switch_policy must be `never`)",
            ));
        }
        Ok(())
    }
}
