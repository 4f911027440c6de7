//! Flat `key = value` config files with `#` comments. Command-line flags
//! override file values; every run writes the effective configuration
//! next to its outputs so a run is reconstructible from its directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use murk_core::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
        let mut values = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{name}:{}: expected 'key = value', got '{raw}'",
                    ln + 1
                )));
            };
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else config-file value, else default.
    pub fn resolve<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("config key '{key}' has unparsable value '{raw}'"))),
            None => Ok(default),
        }
    }
}

/// Deterministic effective-config snapshot (sorted keys, no timestamps).
pub fn write_snapshot(out_dir: &Path, command: &str, entries: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut sorted: Vec<_> = entries.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut text = format!("command = {command}\n");
    for (k, v) in sorted {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = out_dir.join("run-config.txt");
    fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
