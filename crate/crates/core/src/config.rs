//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! preset = disk-small
//! # comments start with '#'
//! train.method = crf_plus_size
//! size.epsilon = 0.1
//! crf.lambda = 2
//! ```
//!
//! A `preset` line, if present, is applied before every other key regardless
//! of its position. Unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{DatasetSpec, GeneratorConfig, ShapeFamily};
use crate::error::{Error, Result};
use crate::network::NetArch;
use crate::trainer::{Method, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub preset: Option<String>,
    pub data: DatasetSpec,
    pub train: TrainConfig,
}

pub const PRESETS: &[&str] = &["disk-small", "crescent-small", "overhead-64"];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

impl Config {
    pub fn preset(name: &str) -> Result<Config> {
        let mut cfg = Config {
            preset: Some(name.to_string()),
            ..Config::default()
        };
        match name {
            // 40 + 10 disks at 64x64
            "disk-small" => {
                cfg.data = DatasetSpec {
                    generator: GeneratorConfig {
                        family: ShapeFamily::Disk,
                        height: 64,
                        width: 64,
                        noise: 0.06,
                        contrast: 0.3,
                        distractors: 0,
                        shading: 0.0,
                    },
                    n_train: 40,
                    n_val: 10,
                    seed: 1,
                    jitter: 0,
                };
                cfg.train = TrainConfig::desk_defaults();
            }
            "crescent-small" => {
                cfg.data = DatasetSpec {
                    generator: GeneratorConfig {
                        family: ShapeFamily::Crescent,
                        height: 48,
                        width: 48,
                        noise: 0.06,
                        contrast: 0.3,
                        distractors: 0,
                        shading: 0.0,
                    },
                    n_train: 24,
                    n_val: 8,
                    seed: 2,
                    jitter: 0,
                };
                cfg.train = TrainConfig::desk_defaults();
            }
            // timing benchmark: 40 training images at 64x64
            "overhead-64" => {
                cfg.data = DatasetSpec {
                    n_train: 40,
                    n_val: 4,
                    seed: 3,
                    ..DatasetSpec::default()
                };
                cfg.train = TrainConfig::desk_defaults();
                cfg.train.epochs = 3;
            }
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                ))
            }
        }
        Ok(cfg)
    }

    /// Parses a config file body.
    pub fn parse(text: &str) -> Result<Config> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, name)) => Config::preset(name)?,
            None => Config::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Sets one key. Values are checked for syntax here and for range in
    /// [`Config::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "preset" => *self = Config::preset(value)?,
            "data.family" => d.generator.family = value.parse()?,
            "data.height" => d.generator.height = parse_num(key, value)?,
            "data.width" => d.generator.width = parse_num(key, value)?,
            "data.noise" => d.generator.noise = parse_num(key, value)?,
            "data.contrast" => d.generator.contrast = parse_num(key, value)?,
            "data.distractors" => d.generator.distractors = parse_num(key, value)?,
            "data.shading" => d.generator.shading = parse_num(key, value)?,
            "data.n_train" => d.n_train = parse_num(key, value)?,
            "data.n_val" => d.n_val = parse_num(key, value)?,
            "data.seed" => d.seed = parse_num(key, value)?,
            "data.jitter" => d.jitter = parse_num(key, value)?,
            "crf.lambda" => t.crf_lambda = parse_num(key, value)?,
            "crf.sigma" => t.crf_sigma = parse_num(key, value)?,
            "crf.neighborhood" => t.crf_neighborhood = value.parse()?,
            "size.epsilon" => t.epsilon = parse_num(key, value)?,
            "net.widths" => {
                let widths = value
                    .split(',')
                    .map(|w| parse_num::<usize>(key, w.trim()))
                    .collect::<Result<Vec<_>>>()?;
                t.arch = NetArch::new(widths)?;
            }
            "train.method" => t.method = value.parse()?,
            "train.epochs" => t.epochs = parse_num(key, value)?,
            "train.iters_per_epoch" => t.iters_per_epoch = parse_num(key, value)?,
            "train.batch_size" => t.batch_size = parse_num(key, value)?,
            "train.lr" => t.lr = parse_num(key, value)?,
            "train.lr_decay" => t.lr_decay = parse_num(key, value)?,
            "train.decay_period" => t.decay_period = parse_num(key, value)?,
            "train.mu_hat" => t.mu_hat = parse_num(key, value)?,
            "train.mu_tilde" => t.mu_tilde = parse_num(key, value)?,
            "train.penalty_mu" => t.penalty_mu = parse_num(key, value)?,
            "train.mu_growth" => t.mu_growth = parse_num(key, value)?,
            "train.optimizer" => t.optimizer = value.parse()?,
            "train.seed" => t.seed = parse_num(key, value)?,
            "train.record_timing" => t.record_timing = parse_bool(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.n_train == 0 {
            return Err(Error::config("data.n_train", "must be >= 1"));
        }
        self.train.validate()
    }

    /// Every key with its resolved value; parsing the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let d = &self.data;
        let g = &d.generator;
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("data.family", g.family.to_string());
        kv("data.height", g.height.to_string());
        kv("data.width", g.width.to_string());
        kv("data.noise", g.noise.to_string());
        kv("data.contrast", g.contrast.to_string());
        kv("data.distractors", g.distractors.to_string());
        kv("data.shading", g.shading.to_string());
        kv("data.n_train", d.n_train.to_string());
        kv("data.n_val", d.n_val.to_string());
        kv("data.seed", d.seed.to_string());
        kv("data.jitter", d.jitter.to_string());
        kv("crf.lambda", t.crf_lambda.to_string());
        kv("crf.sigma", t.crf_sigma.to_string());
        kv("crf.neighborhood", t.crf_neighborhood.to_string());
        kv("size.epsilon", t.epsilon.to_string());
        kv("net.widths", t.arch.to_string());
        kv("train.method", t.method.to_string());
        kv("train.epochs", t.epochs.to_string());
        kv("train.iters_per_epoch", t.iters_per_epoch.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.lr_decay", t.lr_decay.to_string());
        kv("train.decay_period", t.decay_period.to_string());
        kv("train.mu_hat", t.mu_hat.to_string());
        kv("train.mu_tilde", t.mu_tilde.to_string());
        kv("train.penalty_mu", t.penalty_mu.to_string());
        kv("train.mu_growth", t.mu_growth.to_string());
        kv("train.optimizer", t.optimizer.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.record_timing", t.record_timing.to_string());
        s
    }

    pub fn method(&self) -> Method {
        self.train.method
    }
}
