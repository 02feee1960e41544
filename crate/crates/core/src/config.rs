//! JSON run configuration for the command-line front end.
//!
//! Powers are given in dBm and converted to mW when the file is resolved; the
//! SNR grid is given in dB. Relative data paths are taken relative to the
//! directory holding the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::datagen::{load_external_samples, load_external_stats, make_synthetic_stats, BlockRule, FeatureSample};
use crate::model::{db_to_linear, dbm_to_mw, validate_config, ClassStatistics, Scheme, SensorPower, SystemConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("invalid configuration: {0}")]
    Model(#[from] crate::Error),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub users: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    /// Defaults to `2K`.
    #[serde(default)]
    pub feature_dim: Option<usize>,
    pub noise_power_dbm: f64,
    pub server_power_dbm: f64,
    /// Fixed per-sensor budget. Sweeps ignore it and use the SNR grid.
    #[serde(default)]
    pub sensor_power_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    Synthetic {
        #[serde(alias = "L")]
        classes: usize,
    },
    External {
        stats_path: PathBuf,
        #[serde(default)]
        samples_path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub data: DataSection,
    pub schemes: Vec<Scheme>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out_path: PathBuf,
}

/// A configuration with units converted and data loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: SystemConfig,
    pub stats: ClassStatistics,
    pub samples: Option<Vec<FeatureSample>>,
    pub schemes: Vec<Scheme>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out_path: PathBuf,
}

impl Experiment {
    pub fn snr_grid(&self) -> Vec<f64> {
        self.snr_grid_db.iter().map(|&db| db_to_linear(db)).collect()
    }

    /// System configuration for single-instance reports: the fixed sensor
    /// budget if one was given, otherwise the first grid SNR.
    pub fn report_system(&self) -> SystemConfig {
        match self.system.sensor_power {
            SensorPower::Budget(_) => self.system.clone(),
            SensorPower::Snr(_) => self.system.with_snr(db_to_linear(self.snr_grid_db[0])),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.schemes.is_empty() {
            return Err(ConfigError::Invalid("schemes must not be empty".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(ConfigError::Invalid("snr_grid_db must not be empty".into()));
        }
        if let Some(db) = self.snr_grid_db.iter().find(|db| !db.is_finite()) {
            return Err(ConfigError::Invalid(format!("SNR grid value {db} dB is not finite")));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        let s = &self.system;
        for (name, v) in [("noise_power_dbm", s.noise_power_dbm), ("server_power_dbm", s.server_power_dbm)] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} = {v} is not finite")));
            }
        }
        Ok(())
    }

    /// Converts units, loads or generates the class statistics and checks
    /// the system against them. `base` anchors relative data paths.
    pub fn resolve(&self, base: &Path) -> Result<Experiment, ConfigError> {
        let s = &self.system;
        let sensor_power = match s.sensor_power_dbm {
            Some(dbm) if dbm.is_finite() => SensorPower::Budget(dbm_to_mw(dbm)),
            Some(dbm) => return Err(ConfigError::Invalid(format!("sensor_power_dbm = {dbm} is not finite"))),
            None => SensorPower::Snr(db_to_linear(self.snr_grid_db[0])),
        };
        let mut system = SystemConfig::new(
            s.users,
            s.antennas,
            s.subcarriers,
            dbm_to_mw(s.noise_power_dbm),
            dbm_to_mw(s.server_power_dbm),
            sensor_power,
        );
        if let Some(n) = s.feature_dim {
            system.feature_dim = n;
        }

        let (stats, samples) = match &self.data {
            DataSection::Synthetic { classes } => {
                (make_synthetic_stats(*classes, system.feature_dim, BlockRule::Rounded)?, None)
            }
            DataSection::External {
                stats_path,
                samples_path,
            } => {
                let stats = load_external_stats(base.join(stats_path))?;
                let samples = match samples_path {
                    Some(p) => Some(load_external_samples(base.join(p), &stats)?),
                    None => None,
                };
                (stats, samples)
            }
        };
        validate_config(&system, &stats)?;
        if let Some(bad) = samples.iter().flatten().find(|x| x.users() != system.users) {
            return Err(ConfigError::Invalid(format!(
                "recorded sample has {} sensors, system has U = {}",
                bad.users(),
                system.users
            )));
        }
        if samples.as_ref().is_some_and(|x| x.is_empty()) {
            return Err(ConfigError::Invalid("samples file holds no samples".into()));
        }

        Ok(Experiment {
            system,
            stats,
            samples,
            schemes: self.schemes.clone(),
            snr_grid_db: self.snr_grid_db.clone(),
            trials: self.trials,
            seed: self.seed,
            out_path: self.out_path.clone(),
        })
    }
}
