use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use hcattn::bench::{
    decode_throughput, forbid_eos, max_tokens_per_batch, probe_batch, reports_to_csv, step_footprint, ProfileReport,
    TOKEN_RULE,
};
use hcattn::data::EncodedCorpus;
use hcattn::model::{Model, ModelConfig};
use hcattn::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{echo, resolve, usage, DataConfig, DataFlags, ModelFlags, ModelOptions, Seeds};
use crate::setup::{model_config, parse_preset, prepare};

/// Token budget of the reference batch used when no memory budget is given.
const REFERENCE_TOKENS: usize = 600;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    pub presets: Vec<String>,
    /// Accounted allocation budget. When unset, the footprint of one
    /// training step of the first preset on a 600-token batch.
    pub memory_budget_mib: Option<f64>,
    /// Training pairs used to build probe batches.
    pub probe_size: usize,
    /// Dev sentences decoded per timed run; all of them when unset.
    pub sentences: Option<usize>,
    pub runs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    /// `f64` or `f32`.
    pub float: String,
    /// Suppress end-of-sentence so every preset decodes exactly `max_len`
    /// tokens per sentence.
    pub fixed_length: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            presets: vec!["BASE".into(), "HC_SA".into(), "SH_X".into()],
            memory_budget_mib: None,
            probe_size: 64,
            sentences: None,
            runs: 5,
            batch_size: 32,
            max_len: 32,
            float: "f64".into(),
            fixed_length: true,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelOptions,
    pub profile: Options,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "runs/profile".into(),
            data: DataConfig {
                train_size: 256,
                ..DataConfig::default()
            },
            model: ModelOptions::default(),
            profile: Options::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Comma-separated presets to compare
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    presets: Vec<String>,
    /// Allocation budget in MiB for the max-tokens search
    #[arg(long)]
    memory_budget_mib: Option<f64>,
    #[arg(long)]
    probe_size: Option<usize>,
    /// Sentences decoded per timed run
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Decoding length limit
    #[arg(long = "decode-max-len", id = "decode_max_len")]
    max_len: Option<usize>,
    /// f64 or f32
    #[arg(long)]
    float: Option<String>,
    /// Decode every sentence to the length limit
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fixed_length: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    profile: FlagSet,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let o = &r.profile;
    if o.presets.is_empty() {
        return Err(usage("no presets to profile"));
    }
    if o.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let seeds = Seeds::from_root(r.seed);
    let data = prepare(&r.data, &seeds)?;
    let mut configs = Vec::new();
    for name in &o.presets {
        let preset = parse_preset(name)?;
        let cfg = model_config(&r.model, preset, data.src_vocab.len(), data.tgt_vocab.len(), data.gamma)?;
        configs.push((name.clone(), cfg));
    }
    let probe = EncodedCorpus {
        pairs: data.train.pairs.iter().take(o.probe_size).cloned().collect(),
    };
    let n = o.sentences.unwrap_or(data.dev.len()).min(data.dev.len());
    let sources: Vec<Vec<usize>> = data.dev.pairs[..n].iter().map(|(s, _)| s.clone()).collect();
    let out = &r.out_dir;
    echo(&r, out)?;

    let reports = match o.float.as_str() {
        "f64" => profile_all::<f64>(&configs, &probe, &sources, o, seeds.model)?,
        "f32" => profile_all::<f32>(&configs, &probe, &sources, o, seeds.model)?,
        other => return Err(usage(format!("unknown float width `{other}` (f64 or f32)"))),
    };
    std::fs::write(out.join("profile.csv"), reports_to_csv(&reports))?;
    std::fs::write(out.join("profile.json"), serde_json::to_string_pretty(&reports)?)?;
    for rep in &reports {
        println!(
            "{}: max tokens/batch {}, {:.2} sentences/s over {} runs",
            rep.preset,
            rep.max_tokens,
            rep.throughput.mean,
            rep.throughput.runs.len()
        );
    }
    println!("tokens counted on {TOKEN_RULE}");
    println!("wrote {}", out.display());
    Ok(())
}

fn profile_all<T: Scalar>(
    configs: &[(String, ModelConfig)],
    probe: &EncodedCorpus,
    sources: &[Vec<usize>],
    o: &Options,
    seed: u64,
) -> Result<Vec<ProfileReport>> {
    let mut budget = o.memory_budget_mib.map(|m| (m * 1024.0 * 1024.0) as usize);
    let mut reports = Vec::new();
    for (name, cfg) in configs {
        let mut model = Model::<T>::new(cfg.clone(), seed)?;
        let budget = match budget {
            Some(b) => b,
            None => {
                let batch = probe_batch(probe, REFERENCE_TOKENS).ok_or_else(|| anyhow::anyhow!("empty probe corpus"))?;
                let b = step_footprint(&model, &batch)?;
                log::info!("memory budget {:.1} MiB ({name} at {REFERENCE_TOKENS} tokens)", b as f64 / 1048576.0);
                *budget.insert(b)
            }
        };
        let max_tokens = max_tokens_per_batch(&model, budget, probe)?;
        if o.fixed_length {
            forbid_eos(&mut model)?;
        }
        let throughput = decode_throughput(&model, sources, o.batch_size, o.runs, o.max_len)?;
        log::info!("{name}: {max_tokens} tokens, {:.2} sent/s", throughput.mean);
        reports.push(ProfileReport {
            preset: name.clone(),
            max_tokens,
            throughput,
            threads: 1,
            float_bits: 8 * std::mem::size_of::<T>() as u32,
            token_rule: TOKEN_RULE,
        });
    }
    Ok(reports)
}
