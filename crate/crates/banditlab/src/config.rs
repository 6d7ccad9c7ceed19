//! Experiment configuration: a TOML file with study-default values, strict
//! about unknown keys and invalid values.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config value: {0}")]
    InvalidValue(String),
    #[error("unknown policy name \"{0}\" (expected mud, amud, ducb, se, oracle, random)")]
    UnknownPolicy(String),
}

/// How user delays are drawn, as named in config files.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKindName {
    Uniform,
    Constant,
    Custom,
}

/// How the fixed learning rate of the known-horizon learner is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    /// `recommended_eta` with the exact delivered-delay sum of the schedule.
    RecommendedExact,
    /// `recommended_eta` with the pessimistic estimate `T M (d_max + 1) / 2`.
    RecommendedPessimistic,
    Fixed(f64),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EtaModeRaw {
    Named(String),
    Fixed(f64),
}

/// One policy entry: either a bare name or a table with overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub name: String,
    /// Learning-rate override for `mud`.
    pub eta: Option<f64>,
    /// Delay-bound override for `mud` (defaults to `d_max`).
    pub delta: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PolicySpecRaw {
    Name(String),
    Table {
        name: String,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        delta: Option<u32>,
    },
}

pub const POLICY_NAMES: [&str; 6] = ["mud", "amud", "ducb", "se", "oracle", "random"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    master_seed: u64,
    n: Option<usize>,
    m: Option<usize>,
    horizon: Option<u64>,
    tran_num: Option<u64>,
    d_max: Option<u32>,
    delay_kind: Option<DelayKindName>,
    /// CSV of `horizon` rows with `m` integer delays each; required iff
    /// `delay_kind = "custom"`.
    delay_table_path: Option<PathBuf>,
    policies: Option<Vec<PolicySpecRaw>>,
    replications: Option<u32>,
    eta_mode: Option<EtaModeRaw>,
    output_dir: Option<PathBuf>,
}

/// A validated experiment description. Defaults mirror the standard setup:
/// `N = 10`, `M = 10`, `tran_num = 3`, `d_max = 10`, `T = 30000`, `R = 20`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub num_arms: usize,
    pub num_users: usize,
    pub horizon: u64,
    pub tran_num: u64,
    pub d_max: u32,
    pub delay_kind: DelayKindName,
    pub delay_table_path: Option<PathBuf>,
    pub policies: Vec<PolicySpec>,
    pub replications: u32,
    pub eta_mode: EtaMode,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            num_arms: 10,
            num_users: 10,
            horizon: 30_000,
            tran_num: 3,
            d_max: 10,
            delay_kind: DelayKindName::Uniform,
            delay_table_path: None,
            policies: POLICY_NAMES
                .iter()
                .map(|&name| PolicySpec {
                    name: name.to_string(),
                    eta: None,
                    delta: None,
                })
                .collect(),
            replications: 20,
            eta_mode: EtaMode::RecommendedExact,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_arms < 2 {
            return Err(ConfigError::InvalidValue("n must be >= 2".into()));
        }
        if self.num_users == 0 || self.horizon == 0 {
            return Err(ConfigError::InvalidValue(
                "m and horizon must be positive".into(),
            ));
        }
        if self.tran_num == 0 || self.tran_num > self.horizon {
            return Err(ConfigError::InvalidValue(format!(
                "tran_num must be in [1, horizon], got {}",
                self.tran_num
            )));
        }
        if self.d_max == 0 {
            return Err(ConfigError::InvalidValue("d_max must be >= 1".into()));
        }
        if self.replications == 0 {
            return Err(ConfigError::InvalidValue(
                "replications must be >= 1".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::InvalidValue(
                "at least one policy is required".into(),
            ));
        }
        for p in &self.policies {
            if !POLICY_NAMES.contains(&p.name.as_str()) {
                return Err(ConfigError::UnknownPolicy(p.name.clone()));
            }
            if let Some(eta) = p.eta {
                if !(eta > 0.0) {
                    return Err(ConfigError::InvalidValue(format!(
                        "policy {} eta must be positive",
                        p.name
                    )));
                }
            }
        }
        if let EtaMode::Fixed(eta) = self.eta_mode {
            if !(eta > 0.0) {
                return Err(ConfigError::InvalidValue(
                    "fixed eta_mode must be positive".into(),
                ));
            }
        }
        match (&self.delay_kind, &self.delay_table_path) {
            (DelayKindName::Custom, None) => Err(ConfigError::InvalidValue(
                "delay_kind = \"custom\" requires delay_table_path".into(),
            )),
            (DelayKindName::Uniform | DelayKindName::Constant, Some(_)) => {
                Err(ConfigError::InvalidValue(
                    "delay_table_path only applies to delay_kind = \"custom\"".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Parses a TOML experiment config, rejecting unknown keys by name and
/// applying the standard defaults for omitted fields.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
    let defaults = ExperimentConfig::default();
    let policies = match raw.policies {
        None => defaults.policies,
        Some(list) => list
            .into_iter()
            .map(|p| match p {
                PolicySpecRaw::Name(name) => PolicySpec {
                    name,
                    eta: None,
                    delta: None,
                },
                PolicySpecRaw::Table { name, eta, delta } => PolicySpec { name, eta, delta },
            })
            .collect(),
    };
    let eta_mode = match raw.eta_mode {
        None => defaults.eta_mode,
        Some(EtaModeRaw::Fixed(v)) => EtaMode::Fixed(v),
        Some(EtaModeRaw::Named(s)) => match s.as_str() {
            "recommended_exact" => EtaMode::RecommendedExact,
            "recommended_pessimistic" => EtaMode::RecommendedPessimistic,
            other => {
                return Err(ConfigError::InvalidValue(format!(
                    "eta_mode must be recommended_exact, recommended_pessimistic, \
                     or a positive number; got \"{other}\""
                )))
            }
        },
    };
    let cfg = ExperimentConfig {
        master_seed: raw.master_seed,
        num_arms: raw.n.unwrap_or(defaults.num_arms),
        num_users: raw.m.unwrap_or(defaults.num_users),
        horizon: raw.horizon.unwrap_or(defaults.horizon),
        tran_num: raw.tran_num.unwrap_or(defaults.tran_num),
        d_max: raw.d_max.unwrap_or(defaults.d_max),
        delay_kind: raw.delay_kind.unwrap_or(defaults.delay_kind),
        delay_table_path: raw.delay_table_path,
        policies,
        replications: raw.replications.unwrap_or(defaults.replications),
        eta_mode,
        output_dir: raw.output_dir.unwrap_or(defaults.output_dir),
    };
    cfg.validate()?;
    Ok(cfg)
}
