//! Run configuration files.
//!
//! A config file is one JSON object. Training keys sit at the top level; an
//! optional `data` object configures the synthetic generator and an optional
//! `data_path` points at an embedding file instead. Missing keys take their
//! defaults and each applied default is logged.

use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use turbo_core::data::SyntheticConfig;
use turbo_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: SyntheticConfig,
    pub data_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn to_json(&self) -> Value {
        let mut map = to_map(&self.train);
        map.insert("data".into(), Value::Object(to_map(&self.data)));
        if let Some(p) = &self.data_path {
            map.insert("data_path".into(), Value::String(p.display().to_string()));
        }
        Value::Object(map)
    }
}

fn to_map<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("configs are structs"),
    }
}

fn section<T>(
    map: Map<String, Value>,
    prefix: &str,
    defaults: &mut Vec<String>,
) -> Result<T, CliError>
where
    T: DeserializeOwned + Serialize + Default,
{
    let value = Value::Object(map.clone());
    let parsed: T = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." {
            String::new()
        } else {
            format!(" at {prefix}{path}")
        };
        CliError::Config(format!("{}{at}", e.into_inner()))
    })?;
    for (key, v) in to_map(&T::default()) {
        if !map.contains_key(&key) {
            defaults.push(format!("{prefix}{key} = {v}"));
        }
    }
    Ok(parsed)
}

/// Parses a config document. Returns the resolved config and the list of
/// defaults that were applied.
pub fn parse_config_str(text: &str) -> Result<(RunConfig, Vec<String>), CliError> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(mut map) = root else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    let mut defaults = Vec::new();
    let data_path = match map.remove("data_path") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => {
            return Err(CliError::Config(format!(
                "invalid type at data_path: expected a string, found {other}"
            )))
        }
    };
    let data = match map.remove("data") {
        None => {
            defaults.push(format!(
                "data = {}",
                Value::Object(to_map(&SyntheticConfig::default()))
            ));
            SyntheticConfig::default()
        }
        Some(Value::Object(m)) => section(m, "data.", &mut defaults)?,
        Some(other) => {
            return Err(CliError::Config(format!(
                "invalid type at data: expected an object, found {other}"
            )))
        }
    };
    let train: TrainConfig = section(map, "", &mut defaults)?;
    train.validate()?;
    data.validate()?;
    Ok((
        RunConfig {
            train,
            data,
            data_path,
        },
        defaults,
    ))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (cfg, defaults) = parse_config_str(&text)?;
    for d in &defaults {
        info!("default applied: {d}");
    }
    Ok(cfg)
}
