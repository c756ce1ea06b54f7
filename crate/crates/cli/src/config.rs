//! Optional TOML run configuration. Command-line flags override file values.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use evplan_core::congestion::DemandConfig;
use evplan_core::robustness::{TargetRanking, Weighting};
use evplan_core::router::CostMetric;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub demand: DemandConfig,
    pub coverage: CoverageSection,
    pub robustness: RobustnessSection,
    pub siting: SitingSection,
    pub plan: PlanSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub radius_mi: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSection {
    pub lambda_max_mi: Option<f64>,
    pub trials: Option<usize>,
    pub weighting: Option<Weighting>,
    pub target_by: Option<TargetRanking>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SitingSection {
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub ev: Option<String>,
    pub soc: Option<f64>,
    pub alpha: Option<f64>,
    pub avg_speed_mph: Option<f64>,
    pub objective: Option<CostMetric>,
    pub allow_cv_overshoot: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub port: Option<u16>,
    pub cors_origin: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.demand
            .validate()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }
}
