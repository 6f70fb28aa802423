//! Run configuration: one JSON or TOML file covering every subcommand, with
//! `section.field=value` overrides from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use voxgraph_core::metrics::DEFAULT_RESOLUTION;
use voxgraph_core::SynthConfig;
use voxgraph_model::{ModelConfig, TrainConfig};

use crate::error::{CliError, Result};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Seed of the fixed random descriptor weights.
    pub descriptor_seed: u64,
    pub resolution: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            descriptor_seed: 0,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub metrics: MetricsOptions,
    pub paths: Paths,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        let r = self.metrics.resolution;
        if r == 0 || !r.is_multiple_of(4) || r > voxgraph_core::metrics::MAX_RESOLUTION {
            return Err(CliError::Validation(format!(
                "invalid config metrics.resolution: {r} must be a positive multiple of 4 and at most {}",
                voxgraph_core::metrics::MAX_RESOLUTION
            )));
        }
        Ok(())
    }

    /// Reads `path` (TOML when the extension is `.toml`, JSON otherwise), applies
    /// the overrides, and validates. Without a path the defaults are used.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = match path {
            Some(p) => read_tree(p)?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(tree)
            .map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes the configuration actually used into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("config serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn read_tree(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let toml_file = path.extension().is_some_and(|e| e == "toml");
    if toml_file {
        let v: toml::Value = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(|e| CliError::Validation(e.to_string()))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(tree: &mut Value, arg: &str) -> Result<()> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override {arg:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Validation(format!(
                "override key {key:?} has an empty part"
            )));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
