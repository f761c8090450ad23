//! Key-value settings: flags override an optional config file, and every
//! resolved value is recorded for the run manifest.
//!
//! The file holds one `key = value` per line with `#` comments. A manifest
//! written by an earlier run is accepted too, so a run can be replayed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use netference::{Error, Result};

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

fn parse_json_config(text: &str) -> Result<BTreeMap<String, String>> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let obj = v.get("config").unwrap_or(&v);
    let Some(map) = obj.as_object() else {
        return Err(Error::Config("JSON config must be an object".into()));
    };
    Ok(map
        .iter()
        .filter_map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) if s.is_empty() => return None,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Null => return None,
                other => other.to_string(),
            };
            Some((k.clone(), s))
        })
        .collect())
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::Config(format!("config line {}: expected 'key = value'", k + 1)));
        };
        out.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Settings::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let file = if text.trim_start().starts_with('{') { parse_json_config(&text)? } else { parse_kv(&text)? };
        Ok(Settings { file, ..Default::default() })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.file.get(key) else { return Ok(None) };
        self.used.insert(key.to_string());
        raw.parse()
            .map(Some)
            .map_err(|e| Error::Config(format!("invalid value '{raw}' for '{key}': {e}")))
    }

    /// Flag, else file, else `default`.
    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let file = self.from_file(key)?;
        let v = flag.or(file).unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Flag, else file, else absent (recorded as an empty string).
    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let file = self.from_file(key)?;
        let v = flag.or(file);
        self.resolved.insert(key.to_string(), v.as_ref().map_or_else(String::new, |x| x.to_string()));
        Ok(v)
    }

    /// Fails on file keys that no setting consumed.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&str> =
            self.file.keys().filter(|k| !self.used.contains(*k) && !self.resolved.contains_key(*k)).map(|k| k.as_str()).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown config key(s): {}", unknown.join(", "))))
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

/// Comma-separated list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct List(pub Vec<String>);

impl FromStr for List {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(List(s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()))
    }
}

impl Display for List {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join(","))
    }
}

/// Comma-separated numbers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Floats(pub Vec<f64>);

impl FromStr for Floats {
    type Err = std::num::ParseFloatError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect::<std::result::Result<_, _>>().map(Floats)
    }
}

impl Display for Floats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# comment\nscenario = 2\nreps=7\nbogus = 1\n").unwrap();
        let mut s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.value("scenario", Some(3u8), 1).unwrap(), 3);
        assert_eq!(s.value("reps", None, 1usize).unwrap(), 7);
        assert_eq!(s.value("n", None, 100usize).unwrap(), 100);
        assert!(matches!(s.finish(), Err(Error::Config(m)) if m.contains("bogus")));
        assert_eq!(s.resolved()["scenario"], "3");
    }

    #[test]
    fn bad_value_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "n = many\n").unwrap();
        let mut s = Settings::load(Some(&p)).unwrap();
        assert!(matches!(s.value("n", None, 1usize), Err(Error::Config(m)) if m.contains("'n'")));
    }

    #[test]
    fn manifest_json_is_a_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, r#"{"command":"simulate","config":{"n":"300","x_z":"a,b"}}"#).unwrap();
        let mut s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.value("n", None, 1usize).unwrap(), 300);
        assert_eq!(s.value("x_z", None, List::default()).unwrap().0, vec!["a", "b"]);
    }
}
