use crate::CliError;
use ccsgs::design::{DesignSpec, Endpoint};
use ccsgs::spending::FamilySpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

fn default_power() -> f64 {
    0.9
}

/// Design config as read from disk: a design plus run settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub prevalences: Vec<f64>,
    pub timings: Vec<f64>,
    pub alpha: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
    pub spending: Vec<FamilySpec>,
    pub endpoint: Endpoint,
    #[serde(default = "default_power")]
    pub target_power: f64,
    #[serde(default)]
    pub information: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub backend: Option<String>,
    /// Bound algorithm, 1, 2 or 3.
    #[serde(default)]
    pub algorithm: Option<u8>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory for `plan`/`update`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub subgroup_effect: f64,
    #[serde(default)]
    pub p_min: Option<f64>,
    #[serde(default)]
    pub p_max: Option<f64>,
    #[serde(default)]
    pub p_step: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub replications: Option<u64>,
    /// Information actually observed, population by analysis; planned when
    /// omitted.
    #[serde(default)]
    pub actual_information: Option<Vec<Vec<f64>>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cfg: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.design().validate().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn design(&self) -> DesignSpec {
        DesignSpec {
            prevalences: self.prevalences.clone(),
            timings: self.timings.clone(),
            alpha: self.alpha,
            weights: self.weights.clone(),
            transitions: self.transitions.clone(),
            spending: self.spending.clone(),
            endpoint: self.endpoint.clone(),
            target_power: self.target_power,
            information: self.information.clone(),
            backend: self.backend.clone(),
        }
    }

    /// Algorithm from the command line, else the config, else 1.
    pub fn algorithm(&self, flag: Option<u8>) -> Result<String, CliError> {
        let a = flag.or(self.algorithm).unwrap_or(1);
        if !(1..=3).contains(&a) {
            return Err(CliError::Input(format!("algorithm must be 1, 2 or 3, got {a}")));
        }
        Ok(a.to_string())
    }
}
