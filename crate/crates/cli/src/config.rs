//! Flat `key = value` pipeline configuration with a typed schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rali_core::scoring::ScoreTarget;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every accepted key with its default value.
pub const SCHEMA: &[(&str, &str)] = &[
    ("seed", "0"),
    ("n", "2000"),
    ("holdout", "0"),
    ("dim", "64"),
    ("noise_sigma", "0.05"),
    ("text_seeds", "4"),
    ("train", ""),
    ("test", ""),
    ("out_dir", ""),
    ("align.enabled", "true"),
    ("align.seed_augmentation", "true"),
    ("align.lr", "1e-5"),
    ("align.epochs", "10"),
    ("align.batch_size", "256"),
    ("align.temperature", "0.07"),
    ("align.weight_decay", "0"),
    ("pca.enabled", "true"),
    ("pca.m", "32"),
    ("kmeans.bucketed", "true"),
    ("kmeans.k", "250"),
    ("kmeans.buckets", "240"),
    ("kmeans.max_iters", "300"),
    ("kmeans.tol", "1e-6"),
    ("kmeans.n_init", "10"),
    ("finetune.enabled", "true"),
    ("finetune.lr", "3e-2"),
    ("finetune.epochs", "20"),
    ("finetune.batch_size", "32"),
    ("finetune.targets", "centroids,scores"),
    ("eval.logistic", "false"),
    ("sweep.m", ""),
    ("sweep.k", ""),
    ("sweep.n", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AlignSettings {
    pub enabled: bool,
    pub seed_augmentation: bool,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansSettings {
    pub bucketed: bool,
    pub k: usize,
    pub buckets: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub n_init: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSettings {
    pub enabled: bool,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub targets: BTreeSet<ScoreTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n: usize,
    pub holdout: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub text_seeds: usize,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub align: AlignSettings,
    pub pca_enabled: bool,
    pub pca_m: usize,
    pub kmeans: KMeansSettings,
    pub finetune: FinetuneSettings,
    pub logistic: bool,
    pub sweep_m: Vec<usize>,
    pub sweep_k: Vec<usize>,
    pub sweep_n: Vec<usize>,
    raw: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let raw = SCHEMA.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self::from_raw(raw).expect("schema defaults are valid")
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Empty means unset; relative paths resolve against `RALI_DATA_DIR` when set.
pub fn resolve_data_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    if v.is_empty() {
        return None;
    }
    let p = PathBuf::from(v);
    match std::env::var_os("RALI_DATA_DIR") {
        Some(base) if p.is_relative() => Some(Path::new(&base).join(p)),
        _ => Some(p),
    }
}

impl PipelineConfig {
    /// Defaults, then the config file, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, String> =
            SCHEMA.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (k, v) in parse_config_text(&text)? {
                set_raw(&mut raw, &k, &v)?;
            }
        }
        for (k, v) in overrides {
            set_raw(&mut raw, k, v)?;
        }
        Self::from_raw(raw)
    }

    fn from_raw(raw: BTreeMap<String, String>) -> Result<Self, CliError> {
        let g = |k: &str| raw[k].as_str();
        let targets = g("finetune.targets")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<ScoreTarget>().map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let cfg = Self {
            seed: parse("seed", g("seed"))?,
            n: parse("n", g("n"))?,
            holdout: parse("holdout", g("holdout"))?,
            dim: parse("dim", g("dim"))?,
            noise_sigma: parse("noise_sigma", g("noise_sigma"))?,
            text_seeds: parse("text_seeds", g("text_seeds"))?,
            train: resolve_data_path(g("train")),
            test: resolve_data_path(g("test")),
            out_dir: resolve_data_path(g("out_dir")),
            align: AlignSettings {
                enabled: parse_bool("align.enabled", g("align.enabled"))?,
                seed_augmentation: parse_bool("align.seed_augmentation", g("align.seed_augmentation"))?,
                lr: parse("align.lr", g("align.lr"))?,
                epochs: parse("align.epochs", g("align.epochs"))?,
                batch_size: parse("align.batch_size", g("align.batch_size"))?,
                temperature: parse("align.temperature", g("align.temperature"))?,
                weight_decay: parse("align.weight_decay", g("align.weight_decay"))?,
            },
            pca_enabled: parse_bool("pca.enabled", g("pca.enabled"))?,
            pca_m: parse("pca.m", g("pca.m"))?,
            kmeans: KMeansSettings {
                bucketed: parse_bool("kmeans.bucketed", g("kmeans.bucketed"))?,
                k: parse("kmeans.k", g("kmeans.k"))?,
                buckets: parse("kmeans.buckets", g("kmeans.buckets"))?,
                max_iters: parse("kmeans.max_iters", g("kmeans.max_iters"))?,
                tol: parse("kmeans.tol", g("kmeans.tol"))?,
                n_init: parse("kmeans.n_init", g("kmeans.n_init"))?,
            },
            finetune: FinetuneSettings {
                enabled: parse_bool("finetune.enabled", g("finetune.enabled"))?,
                lr: parse("finetune.lr", g("finetune.lr"))?,
                epochs: parse("finetune.epochs", g("finetune.epochs"))?,
                batch_size: parse("finetune.batch_size", g("finetune.batch_size"))?,
                targets,
            },
            logistic: parse_bool("eval.logistic", g("eval.logistic"))?,
            sweep_m: parse_list("sweep.m", g("sweep.m"))?,
            sweep_k: parse_list("sweep.k", g("sweep.k"))?,
            sweep_n: parse_list("sweep.n", g("sweep.n"))?,
            raw,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("align.epochs", self.align.epochs as f64),
            ("pca.m", self.pca_m as f64),
            ("kmeans.k", self.kmeans.k as f64),
            ("kmeans.buckets", self.kmeans.buckets as f64),
            ("kmeans.max_iters", self.kmeans.max_iters as f64),
            ("kmeans.n_init", self.kmeans.n_init as f64),
            ("finetune.batch_size", self.finetune.batch_size as f64),
            ("align.lr", self.align.lr),
            ("finetune.lr", self.finetune.lr),
            ("align.temperature", self.align.temperature),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{k} must be > 0, got {v}")));
            }
        }
        if self.align.batch_size < 2 {
            return Err(CliError::Config("align.batch_size must be >= 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CliError::Config("noise_sigma must be >= 0".into()));
        }
        if self.finetune.targets.is_empty() {
            return Err(CliError::Config("finetune.targets must name at least one target".into()));
        }
        if !(self.kmeans.tol >= 0.0) || !(self.align.weight_decay >= 0.0) {
            return Err(CliError::Config("kmeans.tol and align.weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    /// Resolved values of every key.
    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.raw
    }

    /// Canonical `key=value` lines, sorted by key.
    pub fn canonical(&self) -> String {
        self.raw.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Copy with additional overrides applied.
    pub fn with(&self, overrides: &[(&str, String)]) -> Result<Self, CliError> {
        let mut raw = self.raw.clone();
        for (k, v) in overrides {
            set_raw(&mut raw, k, v)?;
        }
        Self::from_raw(raw)
    }
}

fn set_raw(raw: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<(), CliError> {
    let key = key.trim();
    match raw.get_mut(key) {
        Some(slot) => {
            *slot = value.trim().to_string();
            Ok(())
        }
        None => Err(CliError::Config(format!(
            "unknown config key {key:?}; valid keys: {}",
            SCHEMA.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}
