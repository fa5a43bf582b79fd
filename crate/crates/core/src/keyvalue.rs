//! `key = value` text files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed entries awaiting consumption; leftovers are reported as unknown.
#[derive(Debug)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    /// Removes `key` and returns its raw value.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    /// Parses and stores `key` into `slot` when present.
    pub fn take_into<T>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some((v, line)) = self.entries.remove(key) {
            *slot = v.parse().map_err(|e| Error::Parse {
                path: self.path.clone(),
                line,
                msg: format!("bad value `{v}` for `{key}`: {e}"),
            })?;
        }
        Ok(())
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            Some((k, (_, line))) => Err(Error::Parse {
                path: self.path,
                line,
                msg: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_reports_lines() {
        let text = "# header\nalpha = 3 # trailing\n\n beta=x y \n";
        let mut kv = KeyValues::parse(text, Path::new("c.txt")).unwrap();
        let mut a = 0usize;
        kv.take_into("alpha", &mut a).unwrap();
        assert_eq!(a, 3);
        assert_eq!(kv.take("beta").as_deref(), Some("x y"));
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_and_malformed_entries_fail() {
        let kv = KeyValues::parse("a = 1\nzeta = 2\n", Path::new("c.txt")).unwrap();
        let err = kv.finish().unwrap_err().to_string();
        assert!(err.contains("c.txt:1") && err.contains("unknown key `a`"), "{err}");
        assert!(KeyValues::parse("novalue\n", Path::new("c.txt")).is_err());
        assert!(KeyValues::parse("a = 1\na = 2\n", Path::new("c.txt")).is_err());
        let mut kv = KeyValues::parse("n = -4\n", Path::new("c.txt")).unwrap();
        let mut n = 0usize;
        assert!(kv.take_into("n", &mut n).is_err());
    }
}
