//! Flag / config-file / default resolution, recorded for the run manifest.
//!
//! Precedence: command-line flag, then config file, then built-in default.
//! A config file is either TOML (one key per flag) or a previous run's
//! manifest JSON, whose `resolved` object is reused, so any run can be
//! reproduced from its manifest.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::errors::{CliError, CliResult};

pub struct Resolver {
    config: Map<String, Value>,
    /// Every value this run actually used, default or not.
    pub resolved: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let config = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", p.display())))?;
                let value: Value = if p.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Data(format!("bad JSON config: {e}")))?
                } else {
                    let t: toml::Value = toml::from_str(&text)
                        .map_err(|e| CliError::Data(format!("bad TOML config: {e}")))?;
                    serde_json::to_value(t)
                        .map_err(|e| CliError::Internal(e.to_string()))?
                };
                let mut obj = match value {
                    Value::Object(o) => o,
                    _ => return Err(CliError::Data("config must be a table".into())),
                };
                // a manifest carries its flags under "resolved"
                if let Some(Value::Object(inner)) = obj.remove("resolved") {
                    obj = inner;
                }
                obj
            }
        };
        Ok(Resolver { config, resolved: Map::new() })
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.resolved.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    fn config_value<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.config.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        }
    }

    /// Flag, else config, else default.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: Serialize + DeserializeOwned,
    {
        let value = match flag {
            Some(v) => v,
            None => self.config_value(key)?.unwrap_or(default),
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Flag, else config, else absent.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: Serialize + DeserializeOwned,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.config_value(key)?,
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Required value: flag or config, otherwise a usage error.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: Serialize + DeserializeOwned,
    {
        match self.get_opt(key, flag)? {
            Some(v) => Ok(v),
            None => Err(CliError::Usage(format!("--{} is required", key.replace('_', "-")))),
        }
    }

    /// A switch: true once the flag or the config turns it on.
    pub fn get_switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let value = flag || self.config_value::<bool>(key)?.unwrap_or(false);
        self.record(key, &value);
        Ok(value)
    }
}
