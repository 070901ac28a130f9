//! Run configuration files: TOML with one table per subcommand.
//!
//! ```toml
//! [battery]
//! design = 2
//! rho = 0.4
//! reps = 25
//! ```
//!
//! Command-line flags override file values. Unknown sections or keys are
//! rejected so typos do not silently fall back to defaults.

use crate::error::{Error, Result};
use std::path::Path;

pub const SECTIONS: [&str; 5] = ["simulate", "matrices", "estimate", "battery", "risk"];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for (name, v) in &table {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown config section [{name}]")));
            }
            if !v.is_table() {
                return Err(Error::Config(format!("config entry '{name}' must be a [section]")));
            }
        }
        Ok(ConfigFile { table })
    }

    /// The named section, checked against the keys it may contain.
    pub fn section(&self, name: &'static str, allowed: &[&str]) -> Result<Section<'_>> {
        let table = self.table.get(name).and_then(|v| v.as_table());
        if let Some(t) = table {
            if let Some(bad) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key '{bad}' in [{name}]")));
            }
        }
        Ok(Section { name, table })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
}

impl Section<'_> {
    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&self, key: &str, what: &str) -> Error {
        Error::Config(format!("key '{key}' in [{}] must be {what}", self.name))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.bad(key, "a nonnegative integer")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.bad(key, "true or false")),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.bad(key, "a string")),
        }
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(self.bad(key, "a list of nonnegative integers")),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(self.bad(key, "a list of nonnegative integers")),
        }
    }
}
