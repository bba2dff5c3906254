use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const CONFIG_ENV: &str = "VIVID_CONFIG";

/// `--config` if given, else the path in `VIVID_CONFIG`.
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
}

/// Overlays the flags that were set on top of the config file's keys.
/// File keys use the flag names, e.g. `"lambda-fa": 0.001`.
pub fn layered<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(to_value(flags)?).map_err(invalid)?);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("reading config {}: {e}", path.display())))?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(CliError::Validation(format!(
            "config {} must hold a JSON object",
            path.display()
        )));
    };
    if let Value::Object(over) = to_value(flags)? {
        base_map.extend(over);
    }
    serde_json::from_value(base)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(invalid)
}

fn invalid(e: serde_json::Error) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn is_false(b: &bool) -> bool {
    !*b
}
