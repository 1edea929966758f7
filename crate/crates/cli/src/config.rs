//! Flat TOML configuration files.
//!
//! Keys use the long flag names without the dashes prefix (`eps`, `seed`,
//! `eps-grid`, …); values may be numbers or strings. A flag given on the
//! command line always wins over the file.

use std::path::Path;
use std::str::FromStr;

use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct Config {
    entries: Table,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let entries: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        if let Some((k, _)) = entries.iter().find(|(_, v)| v.is_table() || v.is_array()) {
            return Err(CliError::Usage(format!("config key `{k}`: expected a flat value")));
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Flag value, else config value, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        let text = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        text.parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{text}`")))
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}
