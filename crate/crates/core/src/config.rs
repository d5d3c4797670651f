//! Single JSON configuration document shared by every command.
//!
//! Every section and field is optional; missing values take the defaults of
//! the reference relay and the desk-scale campaign.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::CaseSpec;
use crate::error::{Error, Result};
use crate::feedforward::PreCharge;
use crate::model::PhysicalParams;
use crate::optimizer::SearchSettings;
use crate::plant::{SimOptions, BASELINE_VOLTAGE};
use crate::sensitivity::{OrthogonalMap, DEFAULT_FD_STEP, DEFAULT_NODES};
use crate::trajectory::TrajectorySpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedforwardOptions {
    pub n_samples: usize,
    pub pre_charge: PreCharge,
}

impl Default for FeedforwardOptions {
    fn default() -> Self {
        FeedforwardOptions {
            n_samples: 701,
            pre_charge: PreCharge::Ideal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityOptions {
    pub n_nodes: usize,
    pub fd_step: f64,
    pub orthogonal_map: OrthogonalMap,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            n_nodes: DEFAULT_NODES,
            fd_step: DEFAULT_FD_STEP,
            orthogonal_map: OrthogonalMap::Affine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub cases: Vec<CaseSpec>,
    pub n_trials: usize,
    pub n_ops: usize,
    /// `None` defers to the command line or the environment.
    pub seed: Option<u64>,
    /// Relative half-width of the uniform perturbation of the plant.
    pub half_width: f64,
    pub baseline_voltage: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            cases: CaseSpec::all_named(),
            n_trials: 200,
            n_ops: 300,
            seed: None,
            half_width: 0.05,
            baseline_voltage: BASELINE_VOLTAGE,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Config("at least one case is required".into()));
        }
        if self.n_trials == 0 || self.n_ops == 0 {
            return Err(Error::Config("n_trials and n_ops must be at least 1".into()));
        }
        if !(0.0..0.3).contains(&self.half_width) {
            return Err(Error::Config(format!(
                "half_width must be in [0, 0.3), got {}",
                self.half_width
            )));
        }
        for c in &self.cases {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Nominal model used by the controller and as the center of the
    /// perturbations.
    pub plant: PhysicalParams,
    pub trajectory: TrajectorySpec,
    pub sim: SimOptions,
    pub feedforward: FeedforwardOptions,
    pub sensitivity: SensitivityOptions,
    pub search: SearchSettings,
    pub campaign: CampaignConfig,
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.plant.validate(self.trajectory.upper())?;
        self.sim.validate(&self.trajectory)?;
        self.search.validate()?;
        self.campaign.validate()?;
        if self.feedforward.n_samples < 2 {
            return Err(Error::Config("feedforward.n_samples must be at least 2".into()));
        }
        if self.sensitivity.n_nodes < 2 || !(self.sensitivity.fd_step > 0.0) {
            return Err(Error::Config(
                "sensitivity needs n_nodes >= 2 and a positive fd_step".into(),
            ));
        }
        Ok(())
    }
}
