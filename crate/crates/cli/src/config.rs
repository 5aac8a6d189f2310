//! Layering of config-file sections under command-line flags.
//!
//! The config file is TOML. Each command reads its own section (`[run]`,
//! `[sweep]`, ...) plus `[global]`; keys are the long flag names with
//! underscores. A flag given on the command line always wins.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn empty() -> Self {
        ConfigFile {
            table: toml::Table::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        for key in table.keys() {
            if !matches!(
                key.as_str(),
                "global" | "generate" | "run" | "sweep" | "sc_report"
            ) {
                bail!("config {}: unknown section [{key}]", path.display());
            }
        }
        Ok(ConfigFile { table })
    }

    /// `flags` on top of section `name`. Every field of `T` must be optional
    /// so that absent flags serialize as null.
    pub fn layer<T>(&self, name: &str, flags: &T) -> Result<T>
    where
        T: Serialize + DeserializeOwned + Default,
    {
        let known = match serde_json::to_value(T::default())? {
            Value::Object(map) => map,
            _ => unreachable!("option structs serialize to objects"),
        };
        let mut merged = match self.table.get(name) {
            None => serde_json::Map::new(),
            Some(toml::Value::Table(section)) => {
                let value = serde_json::to_value(section)?;
                let Value::Object(map) = value else {
                    unreachable!()
                };
                for key in map.keys() {
                    if !known.contains_key(key) {
                        bail!("config section [{name}]: unknown key {key:?}");
                    }
                }
                map
            }
            Some(_) => bail!("config: [{name}] must be a table"),
        };
        if let Value::Object(flag_map) = serde_json::to_value(flags)? {
            for (key, value) in flag_map {
                if !value.is_null() {
                    merged.insert(key, value);
                }
            }
        }
        serde_json::from_value(Value::Object(merged))
            .with_context(|| format!("config section [{name}]"))
    }
}
