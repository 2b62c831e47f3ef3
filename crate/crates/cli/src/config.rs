use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use crate::output::Failure;

/// Reads a TOML config file, or the defaults when no file is given. Unknown
/// keys are rejected by the config types themselves.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| Failure::new("config", format!("{}: {}", path.display(), e.message())).into())
}

/// Fails with every listed problem at once.
pub fn check(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::config(&problems).into())
    }
}

/// Parses a flag value with the same spelling as the config file.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Copies every flag that was given onto the config.
macro_rules! apply {
    ($args:expr, $cfg:expr, { $($flag:ident => $($field:ident).+),* $(,)? }) => {
        $(
            if let Some(v) = $args.$flag.clone() {
                $cfg.$($field).+ = v;
            }
        )*
    };
}
pub(crate) use apply;
