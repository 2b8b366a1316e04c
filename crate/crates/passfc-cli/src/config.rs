//! Application configuration: pipeline knobs plus provider endpoints and
//! runtime settings, resolved with precedence flags > env > file > defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use passfc::model::PipelineConfig;

/// Environment variable naming the cache directory.
pub const CACHE_DIR_VAR: &str = "PASSFC_CACHE_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub endpoint: String,
    pub model: String,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o-mini".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub endpoint: String,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            endpoint: passfc::search::DEFAULT_SEARCH_ENDPOINT.to_string(),
        }
    }
}

/// Top-level keys mirror the pipeline-config field names; provider settings
/// nest under `[llm]` and `[search]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub llm: LlmSettings,
    pub search: SearchSettings,
    pub cache_mode: passfc::provider::CacheMode,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            llm: LlmSettings::default(),
            search: SearchSettings::default(),
            cache_mode: passfc::provider::CacheMode::Off,
            cache_dir: None,
            output_dir: PathBuf::from("out"),
            parallelism: 4,
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline
            .validate()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        if self.parallelism == 0 {
            bail!("invalid config: parallelism must be >= 1");
        }
        Ok(())
    }
}

/// Sets `value` at a dotted path inside a JSON tree, coercing scalars to the
/// type currently at that path (arrays split on commas).
fn set_dotted(tree: &mut Value, path: &str, raw: &str) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override path {path:?}: {part:?} is not a table"))?;
        if i + 1 == parts.len() {
            let coerced = match map.get(*part) {
                Some(Value::Array(_)) => Value::Array(
                    raw.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| Value::String(s.to_string()))
                        .collect(),
                ),
                Some(Value::Bool(_)) => Value::Bool(
                    raw.parse()
                        .map_err(|_| anyhow!("override {path}={raw}: expected true/false"))?,
                ),
                Some(Value::Number(_)) => serde_json::from_str(raw)
                    .map_err(|_| anyhow!("override {path}={raw}: expected a number"))?,
                // Unknown or null target: infer bool/number, else string.
                _ => infer_scalar(raw),
            };
            map.insert((*part).to_string(), coerced);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

fn infer_scalar(raw: &str) -> Value {
    if raw == "true" || raw == "false" {
        return Value::Bool(raw == "true");
    }
    if let Ok(n) = serde_json::from_str::<serde_json::Number>(raw) {
        return Value::Number(n);
    }
    Value::String(raw.to_string())
}

/// Loads the effective configuration.
///
/// Precedence, lowest to highest: built-in defaults, the config file, the
/// `PASSFC_CACHE_DIR` environment variable, repeatable `--override key=value`
/// flags, then the dedicated flags handled by the caller.
pub fn load_config(
    config_path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
    env_cache_dir: Option<String>,
) -> Result<AppConfig> {
    let defaults = AppConfig::default();
    let mut tree = serde_json::to_value(&defaults).context("serializing default config")?;

    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let file_value: toml::Value = toml::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        let file_json = serde_json::to_value(file_value).context("converting config to JSON")?;
        reject_unknown_keys(&tree, &file_json, path)?;
        merge_json(&mut tree, &file_json);
    }

    if let Some(dir) = env_cache_dir {
        if !dir.trim().is_empty() {
            tree["cache_dir"] = Value::String(dir);
        }
    }

    for (key, value) in overrides {
        set_dotted(&mut tree, key, value)?;
    }

    let config: AppConfig =
        serde_json::from_value(tree).map_err(|e| anyhow!("invalid config: {e}"))?;
    config.validate()?;
    Ok(config)
}

/// The default-config tree defines the key vocabulary; anything outside it
/// in the file is a typo worth failing on.
fn reject_unknown_keys(known: &Value, candidate: &Value, path: &Path) -> Result<()> {
    if let (Some(known_map), Some(candidate_map)) = (known.as_object(), candidate.as_object()) {
        for (key, value) in candidate_map {
            match known_map.get(key) {
                None => bail!(
                    "config file {}: unknown key {key:?}",
                    path.display()
                ),
                Some(slot) if slot.is_object() && value.is_object() => {
                    reject_unknown_keys(slot, value, path)?;
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

fn merge_json(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(base_map), Value::Object(overlay_map)) => {
            for (key, value) in overlay_map {
                match base_map.get_mut(key) {
                    Some(slot) if slot.is_object() && value.is_object() => {
                        merge_json(slot, value);
                    }
                    _ => {
                        base_map.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (base, overlay) => *base = overlay.clone(),
    }
}
