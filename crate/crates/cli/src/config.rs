//! Flat `key = value` config files and flag/config/default resolution.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use unmix_core::{Error, Result};

/// Keys accepted in a config file. Each matches a long flag name with `-`
/// replaced by `_`.
pub const KNOWN_KEYS: &[&str] = &[
    "dictionary",
    "observations",
    "truth",
    "out_dir",
    "preset",
    "order",
    "energy_fraction",
    "alpha",
    "epsilon",
    "danser_alpha",
    "danser_epsilon",
    "keep",
    "threshold",
    "init",
    "lambda",
    "p",
    "mu",
    "tau",
    "tol",
    "max_iter",
    "csr_lambda",
    "csr_rho",
    "csr_tol",
    "csr_max_iter",
    "materials",
    "pixels",
    "dmer_db",
    "snr_db",
    "seed",
    "bands",
    "members",
    "library_seed",
    "sweep",
    "values",
    "trials",
    "base_seed",
    "workers",
    "low_snr_threshold_db",
    "lambda_low_snr",
    "csr_lambda_low_snr",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got '{line}'")))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(parse_err(format!("unknown key '{key}'")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(parse_err(format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }
}

/// Resolves each parameter as flag, then config file, then default, and
/// remembers the outcome for the run metadata.
#[derive(Debug)]
pub struct Resolver {
    file: ConfigFile,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: ConfigFile) -> Self {
        Self { file, resolved: BTreeMap::new() }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.values.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| {
                    Error::InvalidArgument(format!("config key '{key}': cannot parse '{raw}': {e}"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| Error::InvalidArgument(format!("missing --{} (or '{key}' in the config file)", key.replace('_', "-"))))
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
