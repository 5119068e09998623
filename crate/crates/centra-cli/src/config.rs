//! Flat key-value experiment configs with sections.
//!
//! Format: `key = value` lines; `[section]` prefixes the following keys as
//! `section.key`; `#` starts a comment. Every key read during a run (whether
//! from the file, a `--set` override, or a default) is recorded, and the
//! recorded map is echoed into the report so a report can be replayed
//! exactly.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                field: format!("line {}", lineno + 1),
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            values.insert(full, value.trim().to_string());
        }
        Ok(Config {
            values,
            resolved: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError {
            field: spec.to_string(),
            msg: "override must be key=value".into(),
        })?;
        self.values.insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    fn record(&self, key: &str, value: &str) {
        self.resolved
            .borrow_mut()
            .insert(key.to_string(), value.to_string());
    }

    /// All keys consumed during the run with their effective values.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Read an optional key, recording it when present.
    pub fn optional(&self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if let Some(v) = &v {
            self.record(key, v);
        }
        v
    }

    pub fn require(&self, key: &str) -> Result<String, ConfigError> {
        match self.values.get(key) {
            Some(v) => {
                self.record(key, v);
                Ok(v.clone())
            }
            None => Err(ConfigError {
                field: key.to_string(),
                msg: "missing required key".into(),
            }),
        }
    }

    pub fn get_or(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        v
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: ToString,
    {
        match self.values.get(key) {
            Some(v) => {
                self.record(key, v);
                v.parse::<T>().map_err(|_| ConfigError {
                    field: key.to_string(),
                    msg: format!("cannot parse `{v}`"),
                })
            }
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    /// Comma-separated list, e.g. `100,100,100`.
    pub fn parse_list_or<T: std::str::FromStr>(
        &self,
        key: &str,
        default: &str,
    ) -> Result<Vec<T>, ConfigError> {
        let raw = self.get_or(key, default);
        raw.split(',')
            .map(|tok| {
                tok.trim().parse::<T>().map_err(|_| ConfigError {
                    field: key.to_string(),
                    msg: format!("cannot parse list element `{tok}`"),
                })
            })
            .collect()
    }
}
