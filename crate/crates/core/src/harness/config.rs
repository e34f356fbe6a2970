//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. A key
//! may repeat, and list-valued keys also accept comma-separated values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, Vec<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                invalid(
                    "config",
                    format!("line {}: expected key = value, got `{line}`", i + 1),
                )
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(invalid("config", format!("line {}: empty key", i + 1)));
            }
            entries
                .entry(key.to_string())
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// The last value given for `key`.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key).and_then(|v| v.last()) {
            None => Ok(None),
            Some(raw) => parse_value(key, raw).map(Some),
        }
    }

    /// Every value given for `key`, splitting comma-separated lists.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .into_iter()
            .flatten()
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| parse_value(key, v))
            .collect()
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| invalid("config", format!("key `{key}`: cannot parse `{raw}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = ConfigFile::parse(
            "# header\nseed = 7\n\n n=500, 1000 # grid\nn = 5000\ntrials=2000\nseed=9\n",
        )
        .unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(c.get_list::<u64>("n").unwrap(), vec![500, 1000, 5000]);
        assert_eq!(c.get::<u64>("missing").unwrap(), None);
        assert!(c.get_list::<u64>("missing").unwrap().is_empty());
        assert_eq!(c.keys().collect::<Vec<_>>(), vec!["n", "seed", "trials"]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ConfigFile::parse("seed 7").is_err());
        assert!(ConfigFile::parse("= 7").is_err());
        let c = ConfigFile::parse("seed = seven").unwrap();
        assert!(c.get::<u64>("seed").is_err());
    }
}
