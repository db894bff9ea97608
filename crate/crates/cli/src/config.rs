//! Run configuration: defaults, a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("format must be csv or json, got {other:?}"))),
        }
    }
}

/// Everything that determines a run. Echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// `blobs` for synthetic data, otherwise a CSV path.
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub repeat: usize,
    pub format: Format,
    pub params: BTreeMap<String, String>,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub repeat: Option<usize>,
    pub format: Option<Format>,
    pub set: Vec<String>,
}

pub fn parse_kv_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_kv(line)
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`, got {line:?}", n + 1)))?;
        if map.insert(k.clone(), v).is_some() {
            return Err(CliError::Config(format!("{origin}:{}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(map)
}

fn split_kv(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let seeds = s
        .split(',')
        .map(|t| t.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("seeds: {e}")))?;
    if seeds.is_empty() {
        return Err(CliError::Config("seeds must not be empty".into()));
    }
    Ok(seeds)
}

impl RunConfig {
    pub fn resolve(subcommand: &str, flags: &Overrides) -> Result<Self, CliError> {
        let mut kv = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_kv_text(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for item in &flags.set {
            let (k, v) =
                split_kv(item).ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
            kv.insert(k, v);
        }

        let mut cfg = RunConfig {
            subcommand: subcommand.to_string(),
            dataset: "blobs".into(),
            seeds: vec![0],
            out: PathBuf::from("results"),
            repeat: 5,
            format: Format::Csv,
            params: BTreeMap::new(),
        };
        if let Some(sub) = kv.remove("subcommand") {
            if sub != subcommand {
                return Err(CliError::Config(format!(
                    "config file is for {sub:?}, not {subcommand:?}"
                )));
            }
        }
        if let Some(v) = kv.remove("dataset") {
            cfg.dataset = v;
        }
        match (kv.remove("seed"), kv.remove("seeds")) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either seed or seeds, not both".into())),
            (Some(s), None) | (None, Some(s)) => cfg.seeds = parse_seeds(&s)?,
            (None, None) => {}
        }
        if let Some(v) = kv.remove("out") {
            cfg.out = PathBuf::from(v);
        }
        if let Some(v) = kv.remove("repeat") {
            cfg.repeat = v.parse().map_err(|e| CliError::Config(format!("repeat: {e}")))?;
        }
        if let Some(v) = kv.remove("format") {
            cfg.format = v.parse()?;
        }
        if let Some(s) = flags.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &flags.out {
            cfg.out = o.clone();
        }
        if let Some(r) = flags.repeat {
            cfg.repeat = r;
        }
        if let Some(f) = flags.format {
            cfg.format = f;
        }
        if cfg.repeat == 0 {
            return Err(CliError::Config("repeat must be at least 1".into()));
        }
        cfg.params = kv;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    pub fn dataset_path(&self) -> Option<&Path> {
        (self.dataset != "blobs").then(|| Path::new(&self.dataset))
    }
}

/// Typed access to the hyperparameters of one subcommand. Every lookup
/// records the value used, and [`Params::finish`] rejects leftover keys.
pub struct Params {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Params {
    pub fn new(given: &BTreeMap<String, String>) -> Self {
        Self {
            given: given.clone(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.given.remove(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| CliError::Config(format!("{key} = {raw:?}: {e}")))?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn get_str(&mut self, key: &str, default: &str) -> String {
        let value = self.given.remove(key).unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), value.clone());
        value
    }

    pub fn get_list<T>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.get_str(key, default);
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse::<T>()
                    .map_err(|e| CliError::Config(format!("{key}: {t:?}: {e}")))
            })
            .collect()
    }

    /// Consumes the accessor, returning every parameter with defaults filled in.
    pub fn finish(self) -> Result<BTreeMap<String, String>, CliError> {
        if let Some(k) = self.given.keys().next() {
            return Err(CliError::Config(format!("unknown parameter {k:?} for this subcommand")));
        }
        Ok(self.resolved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_text_rules() {
        let m = parse_kv_text("# c\n a = 1 \n\nb=x=y\n", "t").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x=y");
        assert!(parse_kv_text("a = 1\na = 2\n", "t").is_err());
        assert!(parse_kv_text("novalue\n", "t").is_err());
    }

    #[test]
    fn precedence_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "seeds = 3,4\nrepeat = 2\nk = 7\nformat = json\n").unwrap();
        let flags = Overrides {
            config: Some(path),
            repeat: Some(9),
            set: vec!["k=8".into()],
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve("cv-bench", &flags).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.repeat, 9);
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.params["k"], "8");
    }

    #[test]
    fn params_reject_unknown_keys() {
        let mut given = BTreeMap::new();
        given.insert("k".to_string(), "3".to_string());
        given.insert("bogus".to_string(), "1".to_string());
        let mut p = Params::new(&given);
        assert_eq!(p.get("k", 5usize).unwrap(), 3);
        assert_eq!(p.get("epochs", 2usize).unwrap(), 2);
        assert!(p.finish().is_err());

        let mut p = Params::new(&BTreeMap::new());
        p.get("k", 5usize).unwrap();
        assert_eq!(p.finish().unwrap()["k"], "5");
    }
}
