//! Turning resolved options into corpora, model configs and train configs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hcattn::data::{
    generate_task, ingest_parallel, length_ratio, EncodedCorpus, ParallelCorpus, TaskKind, TaskSpec, Vocab, VocabSource,
};
use hcattn::model::{load_checkpoint, Dims, ModelConfig, Preset};
use hcattn::train::{Schedule, TrainConfig};
use hcattn::Model64;

use crate::config::{usage, DataConfig, ModelOptions, Seeds, TrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(usage(format!("unknown split `{other}` (train, dev or test)"))),
        }
    }
}

fn task_spec(data: &DataConfig) -> Result<TaskSpec> {
    let kind: TaskKind = data.task.parse().map_err(|e| usage(format!("{e}")))?;
    let mut spec = TaskSpec::new(kind, data.symbols + 4, data.max_len, data.train_size, 0);
    spec.min_len = data.min_len;
    Ok(spec)
}

/// Raw text of one split, from the data directory or generated.
pub fn raw_split(data: &DataConfig, seeds: &Seeds, split: Split) -> Result<ParallelCorpus> {
    if let Some(dir) = &data.dir {
        let (src, tgt) = split_paths(dir, split);
        let (c, _, _) = ingest_parallel(&src, &tgt, VocabSource::Build { min_freq: 1 })
            .with_context(|| format!("reading {} split from {}", split.name(), dir.display()))?;
        return Ok(c);
    }
    let spec = task_spec(data)?;
    let (seed, samples) = match split {
        Split::Train => (seeds.train_data, data.train_size),
        Split::Dev => (seeds.dev_data, data.dev_size),
        Split::Test => (seeds.test_data, data.test_size),
    };
    Ok(generate_task(&spec.with_seed(seed).with_samples(samples))?)
}

pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}.src", split.name())),
        dir.join(format!("{}.tgt", split.name())),
    )
}

/// Training corpus with vocabularies built from it, plus the encoded dev set.
pub struct Prepared {
    pub train: EncodedCorpus,
    pub dev: EncodedCorpus,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub gamma: f64,
}

pub fn prepare(data: &DataConfig, seeds: &Seeds) -> Result<Prepared> {
    let train = raw_split(data, seeds, Split::Train)?;
    let dev = raw_split(data, seeds, Split::Dev)?;
    if train.is_empty() {
        bail!("training corpus is empty");
    }
    let src_vocab = Vocab::build(train.sources(), data.min_freq);
    let tgt_vocab = Vocab::build(train.targets(), data.min_freq);
    Ok(Prepared {
        gamma: length_ratio(&train.pairs)?,
        train: train.encode(&src_vocab, &tgt_vocab),
        dev: dev.encode(&src_vocab, &tgt_vocab),
        src_vocab,
        tgt_vocab,
    })
}

pub fn parse_preset(s: &str) -> Result<Preset> {
    s.parse().map_err(|e| usage(format!("{e}")))
}

pub fn dims(m: &ModelOptions) -> Result<Dims> {
    let base: Dims = m.dims.parse().map_err(|e| usage(format!("{e}")))?;
    Ok(Dims::new(
        m.d_model.unwrap_or(base.d_model),
        m.d_ff.unwrap_or(base.d_ff),
        m.heads.unwrap_or(base.heads),
        m.layers.unwrap_or(base.layers),
    ))
}

/// Model config for `preset`; `gamma` is the corpus ratio used unless the
/// options fix one.
pub fn model_config(m: &ModelOptions, preset: Preset, src_vocab: usize, tgt_vocab: usize, gamma: f64) -> Result<ModelConfig> {
    let d = dims(m)?;
    let mut cfg = ModelConfig::preset(preset, d).with_vocab(src_vocab, tgt_vocab);
    if cfg.needs_corpus_gamma() || m.gamma.is_some() {
        cfg = cfg.with_gamma(m.gamma.unwrap_or(gamma));
    }
    cfg.dropout = m.dropout.unwrap_or(if d == Dims::BASE { 0.1 } else { 0.0 });
    cfg.validate().map_err(|e| usage(format!("{e}")))?;
    Ok(cfg)
}

pub fn train_config(t: &TrainOptions, seed: u64) -> Result<TrainConfig> {
    let schedule = match t.schedule.as_str() {
        "linear" => Schedule::Linear { peak: t.lr },
        "warmup" => Schedule::Warmup {
            warmup_steps: t.warmup_steps,
        },
        other => return Err(usage(format!("unknown schedule `{other}` (linear or warmup)"))),
    };
    let cfg = TrainConfig {
        steps: t.steps,
        max_tokens: t.max_tokens,
        schedule,
        seed,
        eval_interval: t.eval_interval,
        label_smoothing: t.label_smoothing,
        target_accuracy: t.target_accuracy,
        dev_bleu: t.dev_bleu,
        decode_max_len: t.decode_max_len,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(format!("{e}")))?;
    Ok(cfg)
}

pub const MANIFEST: &str = "model.json";
pub const SRC_VOCAB: &str = "vocab.src";
pub const TGT_VOCAB: &str = "vocab.tgt";

/// A trained model directory: checkpoint plus both vocabularies.
pub struct ModelDir {
    pub model: Model64,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
}

pub fn load_model_dir(dir: &Path) -> Result<ModelDir> {
    let model = load_checkpoint(&dir.join(MANIFEST)).with_context(|| format!("loading model from {}", dir.display()))?;
    Ok(ModelDir {
        model,
        src_vocab: Vocab::load(&dir.join(SRC_VOCAB))?,
        tgt_vocab: Vocab::load(&dir.join(TGT_VOCAB))?,
    })
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| usage(format!("missing required option --{flag}")))
}

/// Whitespace-tokenized lines of a text file.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

pub fn write_sentences(path: &Path, sentences: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    for s in sentences {
        text.push_str(&s.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
