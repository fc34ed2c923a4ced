//! Line-oriented `section.key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys must contain a
//! section prefix; a key may appear once. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `section.key = value`, got `{trimmed}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let well_formed = k
                .split('.')
                .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
            if !k.contains('.') || !well_formed {
                return Err(Error::Parse {
                    line,
                    msg: format!("malformed key `{k}`"),
                });
            }
            if cfg.entries.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn set_list<T: Display>(&mut self, key: &str, values: &[T]) {
        let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
        self.set(key, v.join(","));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn convert<T: FromStr>(&self, key: &str, v: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let line = self.entries.get(key).map_or(0, |(l, _)| *l);
        v.parse::<T>().map_err(|e| {
            let msg = format!("`{key}`: cannot parse `{v}`: {e}");
            if line > 0 {
                Error::Parse { line, msg }
            } else {
                Error::Config(msg)
            }
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.raw(key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
        self.convert(key, v)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            Some(v) => self.convert(key, v),
            None => Ok(default),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let v = self.raw(key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|p| self.convert(key, p.trim())).collect()
    }

    /// Rejects keys outside `allowed` (exact names).
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                let msg = format!("unknown key `{k}`");
                return Err(if *line > 0 { Error::Parse { line: *line, msg } } else { Error::Config(msg) });
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Renders entries in `order`, then any remaining keys sorted.
    pub fn render(&self, order: &[&str]) -> String {
        let mut out = String::new();
        for k in order {
            if let Some((_, v)) = self.entries.get(*k) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        for (k, (_, v)) in &self.entries {
            if !order.contains(&k.as_str()) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

impl Display for KvConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render(&[]))
    }
}
