use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use hcattn::sweep::{parse_dec_grid, parse_enc_grid, run_sweep, sweep_csv};
use serde::{Deserialize, Serialize};

use crate::config::{
    echo, resolve, usage, DataConfig, DataFlags, ModelFlags, ModelOptions, Seeds, TrainFlags, TrainOptions,
};
use crate::setup::{model_config, parse_preset, prepare, train_config};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// `all`, or head pairs such as `l,r;l,l`.
    pub enc_offsets: String,
    /// `causal`, or head pairs drawn from `l` and `c`.
    pub dec_offsets: String,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            enc_offsets: "all".into(),
            dec_offsets: "causal".into(),
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
    pub train: TrainOptions,
    pub sweep: Options,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "runs/sweep".into(),
            data: DataConfig {
                task: "reverse".into(),
                ..DataConfig::default()
            },
            model: ModelOptions {
                preset: "HC_SA".into(),
                ..ModelOptions::default()
            },
            train: TrainOptions::default(),
            sweep: Options::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Encoder head pairs: `all` or e.g. "l,r;l,l"
    #[arg(long)]
    enc_offsets: Option<String>,
    /// Decoder head pairs: `causal` or e.g. "l,c"
    #[arg(long)]
    dec_offsets: Option<String>,
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
    train: TrainFlags,
    #[command(flatten)]
    sweep: FlagSet,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let enc = parse_enc_grid(&r.sweep.enc_offsets).map_err(|e| usage(e.to_string()))?;
    let dec = parse_dec_grid(&r.sweep.dec_offsets).map_err(|e| usage(e.to_string()))?;
    let seeds = Seeds::from_root(r.seed);
    let preset = parse_preset(&r.model.preset)?;
    let train_cfg = train_config(&r.train, seeds.training)?;
    let data = prepare(&r.data, &seeds)?;
    let base = model_config(&r.model, preset, data.src_vocab.len(), data.tgt_vocab.len(), data.gamma)?;
    let out = &r.out_dir;
    echo(&r, out)?;
    log::info!("sweeping {} configurations", enc.len() * dec.len());
    let rows = run_sweep(&enc, &dec, &base, &data.train, &data.dev, &train_cfg, seeds.model)?;
    let csv = sweep_csv(&rows);
    std::fs::write(out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
