//! Line-based `key = value` text used by configs, manifests and checkpoint
//! metadata.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a repeated key is an error.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(out)
}

/// Typed view over parsed `key = value` pairs that tracks which keys were
/// read, so leftovers can be reported as unknown.
pub struct KvReader {
    map: BTreeMap<String, String>,
}

impl KvReader {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self { map: parse_kv(text)? })
    }

    /// Remove and parse `key`, falling back to `default` when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    /// Error if any key was never taken.
    pub fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let kv = parse_kv("# c\na = 1\n\nb=x y \n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "x y");
        assert!(parse_kv("a = 1\na = 2").is_err());
        assert!(parse_kv("novalue").is_err());
    }

    #[test]
    fn reader_reports_leftovers() {
        let mut r = KvReader::parse("frames = 3\nbogus = 1").unwrap();
        assert_eq!(r.take("frames", 0usize).unwrap(), 3);
        assert_eq!(r.take("width", 64usize).unwrap(), 64);
        assert!(r.finish().unwrap_err().to_string().contains("bogus"));
        let mut r = KvReader::parse("frames = x").unwrap();
        assert!(r.take("frames", 0usize).is_err());
    }
}
