//! Optional flat TOML config files. Keys mirror the long flag names with
//! dashes replaced by underscores; flags given on the command line win.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::{CliError, CliResult};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = sqda::io::read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn require<T>(value: Option<T>, key: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required setting --{key}")))
}

/// Parses `0.1,0.2 0.3` style lists.
pub fn parse_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("'{s}' is not a number"))))
        .collect()
}
