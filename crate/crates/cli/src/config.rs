//! Experiment configuration, a TOML file with a mandatory `version = 1`.
//!
//! ```toml
//! version = 1
//! seed = 2024
//! horizon = 150
//!
//! [system]
//! file = "plant.csv"        # relative to this file
//!
//! [dims]                    # optional, checked against the plant
//! n = 5
//! m = 1
//! p = 3
//! r = 2
//!
//! [excitation]
//! x0_amplitude = 1.0
//! u_amplitude = 5.0
//! d_amplitude = 2.0
//!
//! [fault]                   # absent: fault-free experiment
//! k_f = 10
//! channel = 0
//! profile = { kind = "paper_max" }   # or saturating_min, or step with level
//!
//! [design]
//! r = 2
//!
//! [monitor]
//! k_id = 3
//! threshold = 1e-9
//!
//! [tolerance]
//! rank = 1e-9
//! zero = 1e-8
//! ```
//!
//! Every table is optional. Command-line flags override file values.

use std::path::{Path, PathBuf};

use ddfdi_core::example1::{FaultProfile, HISTORICAL_EXCITATION, HISTORICAL_HORIZON};
use ddfdi_core::{Dims, Error as CoreError, Excitation, Tolerance, Vector};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub k_f: usize,
    #[serde(default)]
    pub channel: usize,
    #[serde(default = "default_profile")]
    pub profile: FaultProfile,
}

fn default_profile() -> FaultProfile {
    FaultProfile::PaperMax
}

impl FaultSpec {
    /// `f(0..len)` with the profile on `channel` and zeros elsewhere.
    pub fn sequence(&self, m: usize, len: usize) -> CliResult<Vec<Vector>> {
        if self.channel >= m {
            return Err(CliError::Schema(format!("fault channel {} but the plant has m = {m}", self.channel)));
        }
        Ok((0..len)
            .map(|k| {
                let mut f = Vector::zeros(m);
                f[self.channel] = self.profile.value(k, self.k_f);
                f
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub r: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    pub k_id: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub rank: Option<f64>,
    pub zero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub dims: Option<Dims>,
    #[serde(default)]
    pub excitation: Option<Excitation>,
    #[serde(default)]
    pub fault: Option<FaultSpec>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub tolerance: ToleranceSection,
    /// Directory of the file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            horizon: None,
            system: SystemSection::default(),
            dims: None,
            excitation: None,
            fault: None,
            design: DesignSection::default(),
            monitor: MonitorSection::default(),
            tolerance: ToleranceSection::default(),
            base_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Schema(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Schema(format!(
                "config version {} is not supported; expected {CONFIG_VERSION}",
                cfg.version
            )));
        }
        if let Some(d) = cfg.dims {
            if d.n == 0 || d.m == 0 || d.p == 0 {
                return Err(CliError::Schema(format!("config dims must be positive, got {d:?}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.at(path))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(HISTORICAL_HORIZON)
    }

    pub fn excitation(&self) -> Excitation {
        self.excitation.unwrap_or(HISTORICAL_EXCITATION)
    }

    pub fn system_file(&self) -> Option<PathBuf> {
        self.system.file.as_ref().map(|f| match &self.base_dir {
            Some(dir) if f.is_relative() => dir.join(f),
            _ => f.clone(),
        })
    }

    /// Tolerance from the file with optional flag overrides.
    pub fn tolerance(&self, rank: Option<f64>, zero: Option<f64>) -> CliResult<Tolerance> {
        let d = Tolerance::default();
        let rank = rank.or(self.tolerance.rank).unwrap_or(d.rel_rank_tol);
        let zero = zero.or(self.tolerance.zero).unwrap_or(d.abs_zero_tol);
        Ok(Tolerance::new(rank, zero)?)
    }

    /// Checks the declared dimensions against the plant and the horizon
    /// against `T > n + m + r + 1`.
    pub fn check_against(&self, dims: Dims, horizon: usize) -> CliResult<()> {
        if let Some(declared) = self.dims {
            if declared != dims {
                return Err(CliError::Schema(format!(
                    "config declares {declared:?} but the plant has {dims:?}"
                )));
            }
        }
        let required = dims.n + dims.m + dims.r + 2;
        if horizon < required {
            return Err(CoreError::HorizonTooShort {
                required,
                actual: horizon,
            }
            .into());
        }
        Ok(())
    }
}
