//! Flat `section.key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
}

pub const KNOWN_KEYS: &[&str] = &[
    "grid.dims",
    "grid.n",
    "grid.L",
    "symbol.m",
    "symbol.tau",
    "schedule.mode",
    "schedule.points",
    "schedule.refinement",
    "schedule.values",
    "schedule.min",
    "schedule.max",
    "cutoff.r",
    "function.kind",
    "function.inner_radius",
    "function.outer_radius",
    "function.seed",
    "function.center",
    "function.width",
    "function.amplitude",
    "function.mass",
    "function.bandwidth",
    "function.taper",
    "audit.name",
    "audit.r",
    "audit.ladder",
    "audit.refinements",
    "audit.threshold",
    "audit.j",
    "audit.taus",
    "audit.samples",
    "audit.j_max",
    "audit.min_decay_exponent",
    "audit.max_fit_residual",
    "output.dir",
    "output.heatmap",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `section.key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("key `{key}` must have the form section.key"),
                });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("key `{key}` has an empty value"),
                });
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("key `{key}` given twice"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Canonical text form: one sorted `key = value` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Invalid {
                key: key.to_string(),
                message: format!("cannot parse `{v}` as {}", std::any::type_name::<T>()),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| ConfigError::Invalid {
                        key: key.to_string(),
                        message: format!("cannot parse list item `{}`", s.trim()),
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.entries.get(key).map(String::as_str) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(other) => Err(ConfigError::Invalid {
                key: key.to_string(),
                message: format!("expected true or false, got `{other}`"),
            }),
        }
    }
}

pub fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}
