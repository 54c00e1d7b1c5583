use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use hcattn::model::{param_count, save_checkpoint};
use hcattn::train::train;
use hcattn::Model64;
use serde::{Deserialize, Serialize};

use crate::config::{
    echo, resolve, DataConfig, DataFlags, ModelFlags, ModelOptions, Seeds, TrainFlags, TrainOptions,
};
use crate::setup::{model_config, parse_preset, prepare, train_config, MANIFEST, SRC_VOCAB, TGT_VOCAB};

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelOptions,
    pub train: TrainOptions,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "runs/train".into(),
            data: DataConfig::default(),
            model: ModelOptions::default(),
            train: TrainOptions::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// Root seed for data, initialization and batching
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
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let seeds = Seeds::from_root(r.seed);
    let preset = parse_preset(&r.model.preset)?;
    let mut train_cfg = train_config(&r.train, seeds.training)?;
    let data = prepare(&r.data, &seeds)?;
    let cfg = model_config(&r.model, preset, data.src_vocab.len(), data.tgt_vocab.len(), data.gamma)?;

    let out = &r.out_dir;
    echo(&r, out)?;
    data.src_vocab.save(&out.join(SRC_VOCAB))?;
    data.tgt_vocab.save(&out.join(TGT_VOCAB))?;
    let manifest = out.join(MANIFEST);
    train_cfg.checkpoint = Some(manifest.clone());

    let model = Model64::new(cfg.clone(), seeds.model)?;
    log::info!(
        "{preset}: {} parameters, {} training pairs, gamma {:?}",
        param_count(&cfg).total,
        data.train.len(),
        cfg.gamma
    );
    let (model, metrics) = train(model, &data.train, &data.dev, &train_cfg)?;
    save_checkpoint(&model, &manifest)?;
    metrics.write_csv(&out.join("metrics.csv"))?;
    match metrics.last() {
        Some(m) => println!(
            "step {}: train loss {:.4}, dev loss {:.4}, dev accuracy {:.4}, dev BLEU {:.2}",
            m.step, m.train_loss, m.dev_loss, m.dev_accuracy, m.dev_bleu
        ),
        None => println!("no training steps; saved the initial model"),
    }
    println!("wrote {}", out.display());
    Ok(())
}
