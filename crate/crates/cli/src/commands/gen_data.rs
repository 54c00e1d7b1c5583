use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use hcattn::data::{length_ratio, Vocab};
use serde::{Deserialize, Serialize};

use crate::config::{echo, resolve, usage, DataConfig, DataFlags, Seeds};
use crate::setup::{raw_split, split_paths, Split, SRC_VOCAB, TGT_VOCAB};

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "data".into(),
            data: DataConfig::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// Root seed; each split derives its own
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    if r.data.dir.is_some() {
        return Err(usage("gen-data writes synthetic data; --data-dir does not apply"));
    }
    let seeds = Seeds::from_root(r.seed);
    let out = &r.out_dir;
    echo(&r, out)?;
    let mut vocabs = None;
    for split in [Split::Train, Split::Dev, Split::Test] {
        let corpus = raw_split(&r.data, &seeds, split)?;
        let (src, tgt) = split_paths(out, split);
        corpus.save(&src, &tgt)?;
        if split == Split::Train {
            let sv = Vocab::build(corpus.sources(), r.data.min_freq);
            let tv = Vocab::build(corpus.targets(), r.data.min_freq);
            println!("gamma (train length ratio) = {:.4}", length_ratio(&corpus.pairs)?);
            vocabs = Some((sv, tv));
        }
        println!("{}: {} pairs", split.name(), corpus.len());
    }
    if let Some((sv, tv)) = vocabs {
        sv.save(&out.join(SRC_VOCAB))?;
        tv.save(&out.join(TGT_VOCAB))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
