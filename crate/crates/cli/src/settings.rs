//! Flag, config-file and default resolution.
//!
//! A config file holds `key = value` lines; `#` starts a comment. Keys are
//! flag names without the leading dashes, and `_` is accepted for `-`.
//! Every value a command reads is recorded so the resolved set can be
//! echoed with the run's metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    read: BTreeSet<String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    pub fn from_config(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut file = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let key = canonical(key);
            if key.is_empty() {
                return Err(format!("line {}: empty key", no + 1));
            }
            if file.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", no + 1));
            }
        }
        Ok(Self { file, ..Self::default() })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': cannot parse '{raw}': {e}"))),
        }
    }

    /// Flag if given, else config value, else `default`.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.read.insert(key.to_string());
        let value = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.read.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.get_opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key} (flag or config key)")))
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.require::<String>(key, flag.map(|p| p.display().to_string())).map(PathBuf::from)
    }

    pub fn path_opt(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        Ok(self.get_opt::<String>(key, flag.map(|p| p.display().to_string()))?.map(PathBuf::from))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw = self.get(key, flag, default.to_string())?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("--{key}: cannot parse '{s}': {e}"))))
            .collect()
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// Config keys no part of the run asked for.
    pub fn unused(&self) -> Vec<&str> {
        self.file.keys().filter(|k| !self.read.contains(*k)).map(String::as_str).collect()
    }
}
