//! Flat `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. `preset` is
//! applied first, then every other key in any order.

use std::collections::BTreeMap;
use std::path::Path;

use super::CliError;
use crate::losses::LossWeights;
use crate::surface::Architecture;
use crate::trainer::{Convergence, TrainConfig};

pub const CONFIG_KEYS: &[&str] = &[
    "preset",
    "patches",
    "points_per_patch",
    "steps",
    "seed",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "clip_norm",
    "code_dim",
    "hidden_layers",
    "width",
    "alpha_def",
    "alpha_ol",
    "alpha_e",
    "alpha_g",
    "alpha_sk",
    "alpha_str",
    "area_normalizer_grad",
    "eval_interval",
    "eval_points",
    "checkpoint_interval",
    "convergence",
];

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected `key = value`", i + 1))
        })?;
        let k = k.trim().to_string();
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key `{k}`",
                i + 1
            )));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "invalid boolean `{v}` for `{key}`"
        ))),
    }
}

/// Builds a training configuration from defaults and the given entries.
pub fn apply(entries: &BTreeMap<String, String>) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(name) = entries.get("preset") {
        cfg.weights = LossWeights::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?;
    }
    let (mut d, mut h, mut w) = (cfg.arch.code_dim, cfg.arch.hidden_layers, cfg.arch.width);
    for (k, v) in entries {
        match k.as_str() {
            "preset" => {}
            "patches" => cfg.patches = parse(k, v)?,
            "points_per_patch" => cfg.points_per_patch = parse(k, v)?,
            "steps" => cfg.steps = parse(k, v)?,
            "seed" => cfg.seed = parse(k, v)?,
            "lr" => cfg.adam.lr = parse(k, v)?,
            "beta1" => cfg.adam.beta1 = parse(k, v)?,
            "beta2" => cfg.adam.beta2 = parse(k, v)?,
            "eps" => cfg.adam.eps = parse(k, v)?,
            "clip_norm" => cfg.clip_norm = parse(k, v)?,
            "code_dim" => d = parse(k, v)?,
            "hidden_layers" => h = parse(k, v)?,
            "width" => w = parse(k, v)?,
            "alpha_def" => cfg.weights.alpha_def = parse(k, v)?,
            "alpha_ol" => cfg.weights.alpha_ol = parse(k, v)?,
            "alpha_e" => cfg.weights.alpha_e = parse(k, v)?,
            "alpha_g" => cfg.weights.alpha_g = parse(k, v)?,
            "alpha_sk" => cfg.weights.alpha_sk = parse(k, v)?,
            "alpha_str" => cfg.weights.alpha_str = parse(k, v)?,
            "area_normalizer_grad" => cfg.loss_options.area_normalizer_grad = parse_bool(k, v)?,
            "eval_interval" => cfg.eval_interval = parse(k, v)?,
            "eval_points" => cfg.eval.points_per_patch = parse(k, v)?,
            "checkpoint_interval" => cfg.checkpoint_interval = parse(k, v)?,
            "convergence" => cfg.convergence = parse_bool(k, v)?.then(Convergence::default),
            other => return Err(CliError::Usage(format!("unknown key `{other}`"))),
        }
    }
    cfg.arch = Architecture::new(d, h, w).map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}
