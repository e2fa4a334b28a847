use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use volchange::registration::IcpParams;
use volchange::volume::Epoch;
use volchange::ChangeParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegistrationMode {
    #[default]
    None,
    Icp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochEntry {
    pub path: PathBuf,
    /// `YYYY-MM-DD` or RFC 3339.
    pub timestamp: String,
    /// Defaults to the timestamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EpochEntry {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.timestamp)
    }
}

/// Everything `run` needs. Relative paths are resolved against the config
/// file's directory when parsed from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    /// Ground grid cell edge in metres; defaults to twice the sample spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<f64>,
    #[serde(default)]
    pub registration: RegistrationMode,
    #[serde(default)]
    pub icp: IcpParams<f64>,
    #[serde(default)]
    pub change: ChangeParams,
    pub epochs: Vec<EpochEntry>,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc());
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}

impl PipelineConfig {
    pub fn new(epochs: Vec<EpochEntry>) -> Self {
        PipelineConfig {
            format_version: FORMAT_VERSION,
            output: default_output(),
            seed: 0,
            threads: 0,
            cell_size: None,
            registration: RegistrationMode::None,
            icp: IcpParams::default(),
            change: ChangeParams::default(),
            epochs,
        }
    }

    /// Parses and validates; relative paths are joined onto `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output);
        for e in &mut cfg.epochs {
            resolve(&mut e.path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != FORMAT_VERSION {
            return Err(invalid("format_version", format!("unsupported version {}, expected {FORMAT_VERSION}", self.format_version)));
        }
        if self.epochs.len() < 2 {
            return Err(invalid("epochs", format!("at least 2 epochs are required for detection, got {}", self.epochs.len())));
        }
        let mut prev: Option<DateTime<Utc>> = None;
        for (i, e) in self.epochs.iter().enumerate() {
            let t = parse_timestamp(&e.timestamp)
                .ok_or_else(|| invalid(format!("epochs[{i}].timestamp"), format!("cannot parse {:?}", e.timestamp)))?;
            if let Some(p) = prev {
                if t <= p {
                    return Err(invalid(
                        format!("epochs[{i}].timestamp"),
                        format!("timestamps must be strictly increasing ({} is not after epochs[{}])", e.timestamp, i - 1),
                    ));
                }
            }
            prev = Some(t);
        }
        if let Some(s) = self.cell_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("cell_size", "must be positive"));
            }
        }
        self.change.validate().map_err(|e| invalid("change", e.to_string()))?;
        self.icp.validate().map_err(|e| invalid("icp", e.to_string()))?;
        Ok(())
    }

    /// Epoch times in days since the first epoch.
    pub fn timeline_epochs(&self) -> Vec<Epoch<f64>> {
        let t0 = parse_timestamp(&self.epochs[0].timestamp).expect("validated");
        self.epochs
            .iter()
            .map(|e| {
                let t = parse_timestamp(&e.timestamp).expect("validated");
                Epoch { label: e.label().to_string(), day: (t - t0).num_milliseconds() as f64 / 86_400_000.0 }
            })
            .collect()
    }
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(dir).map_err(|source| ConfigError::Io { path: dir.to_path_buf(), source })?;
    PipelineConfig::from_toml_str(&text, &base)
}
