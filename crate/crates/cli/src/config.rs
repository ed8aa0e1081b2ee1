//! Run configuration layering: defaults, preset, config file, environment,
//! then flags.

use std::path::{Path, PathBuf};

use autogda::pipeline::RunConfig;
use serde_json::Value;

use crate::CliError;

/// Checked-in parameter sets, one per evaluation corpus.
pub const PRESETS: [(&str, &str); 4] = [
    ("ragtruth-qa", include_str!("../presets/ragtruth-qa.json")),
    ("ragtruth-summ", include_str!("../presets/ragtruth-summ.json")),
    ("lfqa", include_str!("../presets/lfqa.json")),
    ("summedits", include_str!("../presets/summedits.json")),
];

pub const ENV_CACHE_DIR: &str = "AUTOGDA_CACHE_DIR";

/// `(config field, environment variable)` for every endpoint URL.
pub const ENV_ENDPOINTS: [(&str, &str); 6] = [
    ("complete", "AUTOGDA_ENDPOINT_COMPLETE"),
    ("entail", "AUTOGDA_ENDPOINT_ENTAIL"),
    ("link_entail", "AUTOGDA_ENDPOINT_LINK_ENTAIL"),
    ("utility", "AUTOGDA_ENDPOINT_UTILITY"),
    ("embed", "AUTOGDA_ENDPOINT_EMBED"),
    ("paraphrase", "AUTOGDA_ENDPOINT_PARAPHRASE"),
];

pub fn preset(name: &str) -> Result<Value, CliError> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })?;
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("preset `{name}`: {e}")))
}

/// Objects merge key by key; anything else in `over` replaces `base`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(v)
}

/// Defaults, then the preset, then the config file.
pub fn load(preset_name: Option<&str>, file: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut v = serde_json::to_value(RunConfig::default()).expect("default config serializes");
    if let Some(name) = preset_name {
        merge(&mut v, preset(name)?);
    }
    if let Some(path) = file {
        merge(&mut v, read_config_file(path)?);
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

/// Fills fields the config left unset from `lookup`.
pub fn apply_env(config: &mut RunConfig, lookup: impl Fn(&str) -> Option<String>) {
    let get = |name: &str| lookup(name).filter(|s| !s.is_empty());
    if config.cache_dir.is_none() {
        config.cache_dir = get(ENV_CACHE_DIR).map(PathBuf::from);
    }
    let eps = &mut config.endpoints;
    for (field, var) in ENV_ENDPOINTS {
        let slot = match field {
            "complete" => &mut eps.complete,
            "entail" => &mut eps.entail,
            "link_entail" => &mut eps.link_entail,
            "utility" => &mut eps.utility,
            "embed" => &mut eps.embed,
            _ => &mut eps.paraphrase,
        };
        if slot.is_none() {
            *slot = get(var);
        }
    }
}

pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}
