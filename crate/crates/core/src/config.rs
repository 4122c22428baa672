//! Flat `key = value` run files with `[section]` headers.
//!
//! ```text
//! # comment
//! params = toy
//! [simulate]
//! parallelism = 1,1,1,1,1,1,1,1,1,1,1
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Config { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim();
                if !valid_name(name) {
                    return Err(err(format!("bad section name {name:?}")));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_name(k) {
                return Err(err(format!("bad key {k:?}")));
            }
            let sec = sections.entry(current.clone()).or_default();
            if sec.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("duplicate key {k:?}")));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Looks in `section` first, then in the unnamed section.
    pub fn lookup(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).or_else(|| self.get("", key))
    }

    /// Typed [`lookup`](Self::lookup).
    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.lookup(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| Error::Config {
                line: 0,
                msg: format!("{section}.{key} = {v:?}: {e}"),
            }),
        }
    }

    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }
}

impl fmt::Display for ConfigFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, keys) in &self.sections {
            if !name.is_empty() {
                if !first {
                    writeln!(f)?;
                }
                writeln!(f, "[{name}]")?;
            }
            for (k, v) in keys {
                writeln!(f, "{k} = {v}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// Parses a comma-separated list of positive integers, e.g. `4,4,4`.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::BadFactors("empty list".into()));
    }
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::BadFactors(format!("bad entry {t:?} in {s:?}"))),
            Ok(v) => Ok(v),
        })
        .collect()
}
