//! Flat key-value configuration files (TOML without tables).

use std::fs;
use std::path::{Path, PathBuf};

use boundseg::rollout::{MediumMode, RolloutConfig};
use boundseg::OutputPattern;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

pub fn read_flat<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::input("config", format!("{}: {e}", path.display())))?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(CliError::input(
            "config",
            format!("{}: `{k}` is a table; config files are flat", path.display()),
        ));
    }
    T::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::input("config", format!("{}: {e}", path.display())))
}

/// Every rollout setting, all optional; used both for config files and
/// for command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSettings {
    pub m: Option<usize>,
    pub temperature: Option<f64>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub enable_intermediate: Option<bool>,
    pub perturb_steps: Option<usize>,
    pub medium_mode: Option<String>,
    pub end_marker: Option<String>,
    pub pattern: Option<String>,
    pub seed: Option<u64>,
    pub parallel: Option<bool>,
    pub data: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub noise: Option<f64>,
    pub labels: Option<Vec<String>>,
    pub iterations: Option<usize>,
}

impl RolloutSettings {
    /// `other` wins wherever it is set.
    pub fn merged(self, other: RolloutSettings) -> RolloutSettings {
        RolloutSettings {
            m: other.m.or(self.m),
            temperature: other.temperature.or(self.temperature),
            k: other.k.or(self.k),
            batch_size: other.batch_size.or(self.batch_size),
            enable_intermediate: other.enable_intermediate.or(self.enable_intermediate),
            perturb_steps: other.perturb_steps.or(self.perturb_steps),
            medium_mode: other.medium_mode.or(self.medium_mode),
            end_marker: other.end_marker.or(self.end_marker),
            pattern: other.pattern.or(self.pattern),
            seed: other.seed.or(self.seed),
            parallel: other.parallel.or(self.parallel),
            data: other.data.or(self.data),
            replay: other.replay.or(self.replay),
            noise: other.noise.or(self.noise),
            labels: other.labels.or(self.labels),
            iterations: other.iterations.or(self.iterations),
        }
    }

    /// Resolves relative file paths against `base`.
    pub fn relative_to(mut self, base: &Path) -> Self {
        let fix = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        self.data = fix(self.data);
        self.replay = fix(self.replay);
        self
    }

    pub fn rollout_config(&self) -> Result<RolloutConfig, CliError> {
        let d = RolloutConfig::default();
        let pattern = match &self.pattern {
            Some(p) => p.parse::<OutputPattern>().map_err(|e| CliError::input("config", e))?,
            None => d.pattern,
        };
        let medium_mode = match &self.medium_mode {
            Some(m) => m.parse::<MediumMode>().map_err(|e| CliError::input("config", e))?,
            None => d.medium_mode,
        };
        let config = RolloutConfig {
            m: self.m.unwrap_or(d.m),
            temperature: self.temperature.unwrap_or(d.temperature),
            k: self.k.unwrap_or(d.k),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            enable_intermediate: self.enable_intermediate.unwrap_or(d.enable_intermediate),
            perturb_steps: self.perturb_steps.unwrap_or(d.perturb_steps),
            medium_mode,
            end_marker: self.end_marker.clone().unwrap_or(d.end_marker),
            pattern,
            seed: self.seed.unwrap_or(d.seed),
            parallel: self.parallel.unwrap_or(d.parallel),
        };
        config
            .validate()
            .map_err(|e| CliError::input("config", e.to_string()))?;
        Ok(config)
    }
}
