//! Flat `key = value` configuration with environment overrides.
//!
//! Every [`SystemConfig`] field is a key. Any key ending in `_path` names a
//! file. `ADSTITCH_TITLE_BUDGET=5` overrides `title_budget`, and so on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{Objective, SystemConfig};

pub const ENV_PREFIX: &str = "ADSTITCH_";

const SYSTEM_KEYS: [&str; 11] = [
    "title_budget",
    "desc_budget",
    "max_title_chars",
    "max_desc_chars",
    "hash_bits",
    "learning_rate",
    "batch_size",
    "dpp_epsilon",
    "rng_seed",
    "trial_scale",
    "objective",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppConfig {
    pub system: SystemConfig,
    pub paths: BTreeMap<String, PathBuf>,
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl AppConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.system;
        match key {
            "title_budget" => s.title_budget = parse_num(key, value)?,
            "desc_budget" => s.desc_budget = parse_num(key, value)?,
            "max_title_chars" => s.max_title_chars = parse_num(key, value)?,
            "max_desc_chars" => s.max_desc_chars = parse_num(key, value)?,
            "hash_bits" => s.hash_bits = parse_num(key, value)?,
            "learning_rate" => s.learning_rate = parse_num(key, value)?,
            "batch_size" => s.batch_size = parse_num(key, value)?,
            "dpp_epsilon" => s.dpp_epsilon = parse_num(key, value)?,
            "rng_seed" => s.rng_seed = parse_num(key, value)?,
            "trial_scale" => s.trial_scale = parse_num(key, value)?,
            "objective" => {
                s.objective = match value.to_ascii_lowercase().as_str() {
                    "win" => Objective::Win,
                    "click" => Objective::Click,
                    _ => {
                        return Err(Error::Config(format!(
                            "objective = {value:?}: expected win or click"
                        )))
                    }
                }
            }
            k if k.ends_with("_path") && !value.is_empty() => {
                self.paths.insert(k.to_string(), PathBuf::from(value));
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = AppConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let value = value.trim().trim_matches('"');
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies every `ADSTITCH_*` variable in `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|key| (key.to_ascii_lowercase(), v))
            })
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            self.set(&key, &value).map_err(|e| {
                Error::Config(format!("{ENV_PREFIX}{}: {e}", key.to_ascii_uppercase()))
            })?;
        }
        Ok(())
    }

    /// Defaults, then the file if given, then the process environment.
    pub fn resolve(file: Option<&Path>) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => AppConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.system.validate()?;
        Ok(cfg)
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    pub fn to_text(&self) -> String {
        let s = &self.system;
        let values = [
            s.title_budget.to_string(),
            s.desc_budget.to_string(),
            s.max_title_chars.to_string(),
            s.max_desc_chars.to_string(),
            s.hash_bits.to_string(),
            s.learning_rate.to_string(),
            s.batch_size.to_string(),
            s.dpp_epsilon.to_string(),
            s.rng_seed.to_string(),
            s.trial_scale.to_string(),
            match s.objective {
                Objective::Win => "win".to_string(),
                Objective::Click => "click".to_string(),
            },
        ];
        let mut out = String::new();
        for (k, v) in SYSTEM_KEYS.iter().zip(values) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, p) in &self.paths {
            out.push_str(&format!("{k} = {}\n", p.display()));
        }
        out
    }
}
