//! `key = value` configuration files. `#` starts a comment; later keys
//! override earlier ones.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{IoError, IoResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> IoResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IoError::Format(format!("line {}: expected `key = value`, got {:?}", i + 1, raw)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(IoError::Format(format!("line {}: empty key", i + 1)));
            }
            values.insert(k.replace('-', "_"), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| IoError::Path(path.display().to_string(), e))?;
        ConfigFile::parse(&text).map_err(|e| e.context(path))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> IoResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| IoError::Format(format!("config key {} has invalid value {:?}", key, v))),
        }
    }

    /// Keys not in `known`, for error reporting.
    pub fn unknown_keys<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.values.keys().map(String::as_str).filter(|k| !known.contains(k)).collect()
    }
}
