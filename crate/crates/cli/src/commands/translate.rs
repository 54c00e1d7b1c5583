use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hcattn::eval::translate;
use serde::{Deserialize, Serialize};

use crate::config::{echo, resolve};
use crate::setup::{load_model_dir, require, write_sentences};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// Directory written by `train`.
    pub model: Option<PathBuf>,
    /// One sentence per line; stdin when unset.
    pub input: Option<PathBuf>,
    /// Translations plus the resolved config go here; stdout when unset.
    pub out_dir: Option<PathBuf>,
    pub max_len: usize,
    pub batch_size: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            model: None,
            input: None,
            out_dir: None,
            max_len: 64,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Resolved {
    pub translate: Options,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Model directory written by `train`
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input file, one tokenized sentence per line (default: stdin)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write translations.txt and config.toml here instead of stdout
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Maximum output length
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct Flags {
    #[command(flatten)]
    translate: FlagSet,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let o = &r.translate;
    let dir = load_model_dir(require(&o.model, "model")?)?;
    let text = match &o.input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let sources: Vec<Vec<usize>> = text
        .lines()
        .map(|l| {
            let toks: Vec<String> = l.split_whitespace().map(String::from).collect();
            dir.src_vocab.encode(&toks)
        })
        .collect();
    let out = translate(&dir.model, &sources, o.max_len, o.batch_size)?;
    let sentences: Vec<Vec<String>> = out.iter().map(|ids| dir.tgt_vocab.decode(ids)).collect();
    match &o.out_dir {
        Some(d) => {
            echo(&r, d)?;
            write_sentences(&d.join("translations.txt"), &sentences)?;
            log::info!("translated {} sentences into {}", sentences.len(), d.display());
        }
        None => {
            for s in &sentences {
                println!("{}", s.join(" "));
            }
        }
    }
    Ok(())
}
