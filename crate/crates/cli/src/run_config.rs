//! Flat `key=value` run configuration with flag overrides and sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flaicf_core::config::{AttentionMode, Design, ModelConfig, ModelKind, TrainConfig};
use flaicf_core::data::{InputFormat, ParseOptions, SplitPart};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Number,
    Text,
    Flag,
}

/// Every recognized key, its default and its value kind. Comma lists are
/// sweeps only on numeric keys.
const KEYS: &[(&str, &str, Kind)] = &[
    ("model", "FLA_NAIS", Kind::Text),
    ("design", "2", Kind::Text),
    ("attention_mode", "prod", Kind::Text),
    ("d", "16", Kind::Number),
    ("d_prime", "", Kind::Number),
    ("beta", "0.7", Kind::Number),
    ("alpha", "0.5", Kind::Number),
    ("deep_layers", "", Kind::Text),
    ("learning_rate", "0.01", Kind::Number),
    ("lambda", "1e-6", Kind::Number),
    ("neg_ratio", "4", Kind::Number),
    ("epochs", "40", Kind::Number),
    ("seed", "0", Kind::Number),
    ("early_stop_patience", "10", Kind::Number),
    ("adagrad_epsilon", "1e-8", Kind::Number),
    ("pretrain", "false", Kind::Flag),
    ("pretrain_checkpoint", "", Kind::Text),
    ("data_dir", "data", Kind::Text),
    ("output_dir", "runs", Kind::Text),
    ("checkpoint", "", Kind::Text),
    ("raw", "", Kind::Text),
    ("format", "tsv", Kind::Text),
    ("delimiter", "", Kind::Text),
    ("user_column", "0", Kind::Number),
    ("item_column", "1", Kind::Number),
    ("has_header", "false", Kind::Flag),
    ("k_user", "1", Kind::Number),
    ("k_item", "1", Kind::Number),
    ("train_ratio", "0.7", Kind::Number),
    ("valid_ratio", "0.1", Kind::Number),
    ("test_ratio", "0.2", Kind::Number),
    ("split", "test", Kind::Text),
    ("n", "10", Kind::Number),
    ("baseline", "", Kind::Text),
    ("knn_k", "0", Kind::Number),
    ("report", "", Kind::Text),
    ("tolerance", "1e-4", Kind::Number),
    ("history", "5", Kind::Number),
    ("user", "", Kind::Text),
    ("targets", "", Kind::Text),
];

fn key_kind(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, _, kind)| *kind)
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Raw string values for every key; typed accessors parse on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        if key_kind(&key).is_none() {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key=value`", origin.display(), lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Applies `--key value` / `--key=value` flags. A flag key given without
    /// a value means `true`.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<()> {
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("expected `--key value`, found `{arg}`")))?;
            if let Some((k, v)) = body.split_once('=') {
                self.set(k, v)?;
                i += 1;
                continue;
            }
            let key = normalize_key(body);
            let kind = key_kind(&key).ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
            match args.get(i + 1) {
                Some(v) if !(kind == Kind::Flag && v.starts_with("--")) => {
                    self.set(&key, v)?;
                    i += 2;
                }
                _ if kind == Kind::Flag => {
                    self.set(&key, "true")?;
                    i += 1;
                }
                _ => return Err(CliError::Config(format!("missing value for `--{key}`"))),
            }
        }
        Ok(())
    }

    pub fn load(file: Option<&Path>, flags: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(flags)?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        if raw.contains(',') && key_kind(key) == Some(Kind::Number) {
            return Err(CliError::Config(format!(
                "`{key}={raw}` is a sweep; sweeps are only expanded by `train`"
            )));
        }
        raw.parse()
            .map_err(|_| CliError::Config(format!("cannot parse `{key}={raw}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parse(key)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("`{key}` must be true or false, got `{other}`"))),
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|s| !s.is_empty())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.text(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("`{key}` is required for this command")))
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(self.raw("model").parse()?)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let kind = self.model_kind()?;
        let mut cfg = ModelConfig::new(kind, self.usize("d")?);
        cfg.design = self.raw("design").parse::<Design>()?;
        cfg.attention_mode = self.raw("attention_mode").parse::<AttentionMode>()?;
        if self.text("d_prime").is_some() {
            cfg.d_prime = self.usize("d_prime")?;
        }
        cfg.beta = self.f64("beta")?;
        cfg.alpha = self.f64("alpha")?;
        if let Some(layers) = self.text("deep_layers") {
            cfg.deep_layers = layers
                .split(':')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CliError::Config(format!("`deep_layers` must look like 16:8, got `{layers}`")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.f64("learning_rate")?,
            lambda: self.f64("lambda")?,
            neg_ratio: self.usize("neg_ratio")?,
            epochs: self.usize("epochs")?,
            seed: self.u64("seed")?,
            early_stop_patience: self.usize("early_stop_patience")?,
            adagrad_epsilon: self.f64("adagrad_epsilon")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_options(&self) -> Result<ParseOptions> {
        let format: InputFormat = self.raw("format").parse()?;
        let mut opts = ParseOptions::from(format);
        if let Some(delim) = self.text("delimiter") {
            opts.delimiter = match delim {
                "\\t" | "tab" => "\t".to_string(),
                other => other.to_string(),
            };
        }
        opts.user_column = self.usize("user_column")?;
        opts.item_column = self.usize("item_column")?;
        opts.has_header = self.flag("has_header")?;
        if opts.user_column == opts.item_column {
            return Err(CliError::Config("user_column and item_column must differ".into()));
        }
        Ok(opts)
    }

    pub fn ratios(&self) -> Result<[f64; 3]> {
        Ok([self.f64("train_ratio")?, self.f64("valid_ratio")?, self.f64("test_ratio")?])
    }

    pub fn split_part(&self) -> Result<SplitPart> {
        let part: SplitPart = self.raw("split").parse()?;
        if part == SplitPart::Train {
            return Err(CliError::Config("`split` must be valid or test".into()));
        }
        Ok(part)
    }

    /// Expands comma lists on numeric keys into the Cartesian product of
    /// runs. Each run carries a suffix such as `beta=0.1_d=8` naming the
    /// swept values; a config without sweeps yields itself with no suffix.
    pub fn expand_sweeps(&self) -> Vec<(Option<String>, RunConfig)> {
        let swept: Vec<(&str, Vec<String>)> = KEYS
            .iter()
            .filter(|(_, _, kind)| *kind == Kind::Number)
            .filter_map(|(k, _, _)| {
                let raw = self.raw(k);
                raw.contains(',')
                    .then(|| (*k, raw.split(',').map(|v| v.trim().to_string()).collect()))
            })
            .collect();
        if swept.is_empty() {
            return vec![(None, self.clone())];
        }
        let mut runs = vec![(Vec::<String>::new(), self.clone())];
        for (key, values) in &swept {
            runs = runs
                .into_iter()
                .flat_map(|(tags, cfg)| {
                    values.iter().map(move |v| {
                        let mut cfg = cfg.clone();
                        cfg.values.insert(key.to_string(), v.clone());
                        let mut tags = tags.clone();
                        tags.push(format!("{key}={v}"));
                        (tags, cfg)
                    })
                })
                .collect();
        }
        runs.into_iter().map(|(tags, cfg)| (Some(tags.join("_")), cfg)).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, _, _) in KEYS {
            writeln!(f, "{k}={}", self.raw(k))?;
        }
        Ok(())
    }
}
