use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use hcattn::data::{EncodedCorpus, ParallelCorpus};
use hcattn::eval::{contrastive_accuracy, corpus_bleu, load_contrastive, teacher_forced, translate};
use serde::{Deserialize, Serialize};

use crate::config::{echo, resolve, DataConfig, DataFlags, Seeds};
use crate::setup::{load_model_dir, raw_split, read_sentences, require, write_sentences, ModelDir, Split};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    pub model: Option<PathBuf>,
    /// Split of the data section to score.
    pub split: String,
    /// Explicit source/reference files instead of a split.
    pub src: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Tab-separated `category, src, reference, contrastive` lines.
    pub contrastive: Option<PathBuf>,
    pub max_len: usize,
    pub batch_size: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            model: None,
            split: "test".into(),
            src: None,
            reference: None,
            contrastive: None,
            max_len: 64,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub evaluate: Options,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "runs/eval".into(),
            data: DataConfig::default(),
            evaluate: Options::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Model directory written by `train`
    #[arg(long)]
    model: Option<PathBuf>,
    /// train, dev or test
    #[arg(long)]
    split: Option<String>,
    /// Source file (with --reference) instead of a data split
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Contrastive set to score
    #[arg(long)]
    contrastive: Option<PathBuf>,
    /// Maximum output length when decoding
    #[arg(long = "decode-max-len", id = "decode_max_len")]
    max_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// Root seed (selects the synthetic split when no files are given)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    evaluate: FlagSet,
}

/// The text pairs to score: explicit files, or a split of the data section.
pub fn eval_pairs(data: &DataConfig, seed: u64, src: &Option<PathBuf>, reference: &Option<PathBuf>, split: &str) -> Result<ParallelCorpus> {
    match (src, reference) {
        (Some(s), Some(r)) => {
            let (s, r) = (read_sentences(s)?, read_sentences(r)?);
            if s.len() != r.len() {
                bail!("{} source lines but {} reference lines", s.len(), r.len());
            }
            Ok(ParallelCorpus::new(s.into_iter().zip(r).collect(), "files")?)
        }
        (None, None) => raw_split(data, &Seeds::from_root(seed), Split::parse(split)?),
        _ => Err(crate::config::usage("--src and --reference go together")),
    }
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let o = &r.evaluate;
    let ModelDir {
        model,
        src_vocab,
        tgt_vocab,
    } = load_model_dir(require(&o.model, "model")?)?;
    let pairs = eval_pairs(&r.data, r.seed, &o.src, &o.reference, &o.split)?;
    let encoded: EncodedCorpus = pairs.encode(&src_vocab, &tgt_vocab);
    let out = &r.out_dir;
    echo(&r, out)?;

    let sources: Vec<Vec<usize>> = encoded.pairs.iter().map(|(s, _)| s.clone()).collect();
    let hyps: Vec<Vec<String>> = translate(&model, &sources, o.max_len, o.batch_size)?
        .iter()
        .map(|ids| tgt_vocab.decode(ids))
        .collect();
    let refs: Vec<Vec<String>> = pairs.targets().cloned().collect();
    let bleu = corpus_bleu(&hyps, &refs)?;
    let tf = teacher_forced(&model, &encoded, 4096)?;
    write_sentences(&out.join("hyp.txt"), &hyps)?;
    let label = if o.src.is_some() { "files" } else { o.split.as_str() };
    std::fs::write(
        out.join("eval.csv"),
        format!(
            "split,sentences,bleu,loss,token_accuracy\n{label},{},{bleu},{},{}\n",
            hyps.len(),
            tf.loss,
            tf.accuracy
        ),
    )?;
    println!(
        "{label}: {} sentences, BLEU {bleu:.2}, loss {:.4}, token accuracy {:.4}",
        hyps.len(),
        tf.loss,
        tf.accuracy
    );

    if let Some(path) = &o.contrastive {
        let items = load_contrastive(path, &src_vocab, &tgt_vocab)?;
        let report = contrastive_accuracy(&model, &items)?;
        let mut csv = String::from("category,correct,total,accuracy\n");
        for (cat, s) in &report.per_category {
            let _ = writeln!(csv, "{cat},{},{},{}", s.correct, s.total, s.accuracy);
        }
        let all = report.overall;
        let _ = writeln!(csv, "all,{},{},{}", all.correct, all.total, all.accuracy);
        std::fs::write(out.join("contrastive.csv"), csv)?;
        println!("contrastive accuracy {:.4} ({}/{})", all.accuracy, all.correct, all.total);
    }
    println!("wrote {}", out.display());
    Ok(())
}
