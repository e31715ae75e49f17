//! Engine-wide TOML configuration: one section per module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::ArchConfig;
use crate::demo::SubsampleConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::imitation::PretrainConfig;
use crate::losses::LossWeights;
use crate::trainer::{AblationConfig, EvalConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub count: usize,
    pub seed: u64,
    /// Probability that the scripted expert takes a uniformly random action.
    pub noise: f64,
    /// Degrees per frame for recorded turns; 30 keeps whole-step turns.
    pub rotation_granularity: i32,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            noise: 0.2,
            rotation_granularity: 30,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("demos.count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config(format!("demos.noise must be in [0, 1], got {}", self.noise)));
        }
        if self.rotation_granularity <= 0 || 30 % self.rotation_granularity != 0 {
            return Err(Error::config("demos.rotation_granularity must be a positive divisor of 30"));
        }
        Ok(())
    }
}

/// Rows and seeds of an ablation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seeds: Vec<u64>,
    /// Row labels: `supervised`, `+cp`, `impala`, `+er`, `+er+sac`, `+er+sac+ac`, `+er+sac+cl`, `+er+sac+ac+cl`.
    pub rows: Vec<String>,
    /// Replay ratios swept with every component switched on.
    pub replay_ratios: Vec<usize>,
}

pub const TABLE_ROWS: [&str; 8] = [
    "supervised",
    "+cp",
    "impala",
    "+er",
    "+er+sac",
    "+er+sac+ac",
    "+er+sac+cl",
    "+er+sac+ac+cl",
];

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            rows: TABLE_ROWS.iter().map(|s| s.to_string()).collect(),
            replay_ratios: vec![1, 3, 7, 15, 31],
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("suite.seeds must not be empty"));
        }
        for r in &self.rows {
            parse_row(r)?;
        }
        if self.replay_ratios.contains(&0) {
            return Err(Error::config("suite.replay_ratios must be positive"));
        }
        Ok(())
    }
}

/// What a suite row trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Supervised policy only, with or without inventory input to the craft heads.
    Supervised { craft_subnet: bool },
    FineTune { er: bool, sac: bool, ac: bool, cl: bool },
}

pub fn parse_row(label: &str) -> Result<RowKind> {
    let l = label.trim().to_ascii_lowercase();
    match l.as_str() {
        "supervised" => return Ok(RowKind::Supervised { craft_subnet: false }),
        "+cp" => return Ok(RowKind::Supervised { craft_subnet: true }),
        "impala" => {
            return Ok(RowKind::FineTune {
                er: false,
                sac: false,
                ac: false,
                cl: false,
            })
        }
        _ => {}
    }
    let parts: Vec<&str> = l.split('+').map(str::trim).collect();
    if parts.len() < 2 || !parts[0].is_empty() && parts[0] != "impala" {
        return Err(Error::config(format!("unknown suite row {label:?}")));
    }
    let (mut er, mut sac, mut ac, mut cl) = (false, false, false, false);
    for p in &parts[1..] {
        match *p {
            "er" => er = true,
            "sac" => sac = true,
            "ac" => ac = true,
            "cl" => cl = true,
            _ => return Err(Error::config(format!("unknown component {p:?} in suite row {label:?}"))),
        }
    }
    Ok(RowKind::FineTune { er, sac, ac, cl })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub env: EnvConfig,
    pub architecture: ArchConfig,
    pub demos: DemoConfig,
    pub subsample: SubsampleConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub ablation: AblationConfig,
    pub eval: EvalConfig,
    pub suite: SuiteConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `section.key=value` overrides before validation.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(format!("invalid TOML: {}", e.message())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.architecture.validate()?;
        self.demos.validate()?;
        self.subsample.validate()?;
        self.pretrain.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.ablation.validate()?;
        self.eval.validate()?;
        self.suite.validate()
    }

    /// Settings that are accepted but changed before use.
    pub fn warnings(&self) -> Vec<String> {
        self.ablation.coerced().1.into_iter().collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(format!("cannot serialize config: {e}")))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("override {spec:?} is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::usage(format!("override {spec:?} has an empty key")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::usage(format!("override {spec:?}: `{k}` is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
