//! Command configuration: defaults, then the config file, then flags.
//!
//! A config file is TOML with the same nesting as the resolved config
//! (`seed`, `out-dir`, `[data]`, `[model]`, `[train]` and one section per
//! command). Keys mirror the long flags. Sections a command does not use are
//! ignored, so one file can drive several commands.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Bad user input; the process exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Resolve `R` from its defaults, the matching keys of `file` and the flags
/// that were actually given (`None` flags serialize to nothing).
pub fn resolve<R, F>(file: Option<&Path>, flags: &F) -> Result<R>
where
    R: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let known = Table::try_from(R::default()).context("serializing defaults")?;
    let mut table = Table::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed: Table = text
            .parse()
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        table.extend(parsed.into_iter().filter(|(k, _)| known.contains_key(k)));
    }
    merge(&mut table, Table::try_from(flags).context("serializing flags")?);
    Value::Table(table)
        .try_into()
        .map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// Write the resolved config next to the command's artifacts.
pub fn echo<R: Serialize>(resolved: &R, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let text = toml::to_string_pretty(resolved)?;
    std::fs::write(out_dir.join("config.toml"), text)?;
    Ok(())
}

/// Per-component seeds split from the root seed.
#[derive(Debug, Clone, Copy)]
pub struct Seeds {
    pub train_data: u64,
    pub dev_data: u64,
    pub test_data: u64,
    pub model: u64,
    pub training: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            train_data: root,
            dev_data: root.wrapping_add(1),
            test_data: root.wrapping_add(2),
            model: root.wrapping_add(3),
            training: root.wrapping_add(4),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataConfig {
    /// Directory holding `{train,dev,test}.{src,tgt}`; synthetic data is
    /// generated from `task` when unset.
    pub dir: Option<PathBuf>,
    pub task: String,
    /// Content symbols, not counting the four reserved tokens.
    pub symbols: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub min_freq: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            task: "copy".into(),
            symbols: 50,
            min_len: 1,
            max_len: 10,
            train_size: 20_000,
            dev_size: 200,
            test_size: 200,
            min_freq: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataFlags {
    /// Directory with {train,dev,test}.{src,tgt} text files
    #[arg(long = "data-dir")]
    pub dir: Option<PathBuf>,
    /// Synthetic task: copy, reverse, expand:K or vocab-map
    #[arg(long)]
    pub task: Option<String>,
    /// Content symbols of the synthetic vocabulary
    #[arg(long)]
    pub symbols: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longest synthetic source sentence
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub dev_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Drop tokens seen fewer times when building vocabularies
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelOptions {
    pub preset: String,
    pub dims: String,
    pub d_model: Option<usize>,
    pub d_ff: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    /// Defaults to 0.1 at base dims and 0 otherwise.
    pub dropout: Option<f64>,
    /// Length ratio for hard-coded cross attention; measured on the
    /// training corpus when unset.
    pub gamma: Option<f64>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            preset: "BASE".into(),
            dims: "small".into(),
            d_model: None,
            d_ff: None,
            heads: None,
            layers: None,
            dropout: None,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelFlags {
    /// BASE, HC_SA, HC_ALL, SH_X, NO_SA, with optional /NO_SA or /NO_FF
    #[arg(long)]
    pub preset: Option<String>,
    /// small (288/507/4/5) or base (512/2048/8/6)
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Source/target length ratio for hard-coded cross attention
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainOptions {
    pub steps: usize,
    pub max_tokens: usize,
    /// `linear` (decays from `lr`) or `warmup` (inverse square root).
    pub schedule: String,
    pub lr: f64,
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub label_smoothing: f64,
    pub target_accuracy: Option<f64>,
    pub dev_bleu: bool,
    pub decode_max_len: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            max_tokens: 2048,
            schedule: "linear".into(),
            lr: 3e-4,
            warmup_steps: 4000,
            eval_interval: 100,
            label_smoothing: 0.0,
            target_accuracy: None,
            dev_bleu: true,
            decode_max_len: 64,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainFlags {
    #[arg(long)]
    pub steps: Option<usize>,
    /// Token budget per batch (both sides, padding included)
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// linear or warmup
    #[arg(long)]
    pub schedule: Option<String>,
    /// Peak learning rate of the linear schedule
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    /// Stop once dev token accuracy reaches this value
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Decode the dev set at every evaluation
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dev_bleu: Option<bool>,
    #[arg(long)]
    pub decode_max_len: Option<usize>,
}
