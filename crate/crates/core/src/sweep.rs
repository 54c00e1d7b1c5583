//! Grid search over hard-coded self-attention head placements.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::attention::AttentionSpec;
use crate::data::EncodedCorpus;
use crate::error::{Error, Result};
use crate::model::{duplicate_heads, Model, ModelConfig};
use crate::train::{dev_bleu, train, TrainConfig};

/// Where a head looks relative to the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    /// `i - 1`
    L,
    /// `i`
    C,
    /// `i + 1`
    R,
}

impl Pos {
    pub fn offset(self) -> i64 {
        match self {
            Pos::L => -1,
            Pos::C => 0,
            Pos::R => 1,
        }
    }
}

impl FromStr for Pos {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l" => Ok(Pos::L),
            "c" => Ok(Pos::C),
            "r" => Ok(Pos::R),
            other => Err(Error::config(format!("unknown head position `{other}` (use l, c or r)"))),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pos::L => "l",
            Pos::C => "c",
            Pos::R => "r",
        })
    }
}

/// Head pattern of a layer, repeated across its heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeadPair(pub Pos, pub Pos);

impl HeadPair {
    pub fn offsets(self) -> [i64; 2] {
        [self.0.offset(), self.1.offset()]
    }
}

impl fmt::Display for HeadPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// Encoder grid: `all` or explicit pairs such as `l,r;l,l`.
pub fn parse_enc_grid(s: &str) -> Result<Vec<HeadPair>> {
    match s.trim() {
        "all" => Ok(vec![HeadPair(Pos::L, Pos::L), HeadPair(Pos::L, Pos::R)]),
        list => parse_pairs(list),
    }
}

/// Decoder grid: `causal` or explicit pairs; `r` is rejected because it
/// would read the next target token.
pub fn parse_dec_grid(s: &str) -> Result<Vec<HeadPair>> {
    let pairs = match s.trim() {
        "causal" => vec![HeadPair(Pos::L, Pos::L), HeadPair(Pos::C, Pos::C), HeadPair(Pos::L, Pos::C)],
        list => parse_pairs(list)?,
    };
    if let Some(p) = pairs.iter().find(|p| p.0 == Pos::R || p.1 == Pos::R) {
        return Err(Error::config(format!("decoder configuration {p} attends to a future position")));
    }
    Ok(pairs)
}

fn parse_pairs(s: &str) -> Result<Vec<HeadPair>> {
    let pairs = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let parts: Vec<&str> = p.trim().trim_matches(|c| c == '(' || c == ')').split(',').collect();
            match parts.as_slice() {
                [a, b] => Ok(HeadPair(a.parse()?, b.parse()?)),
                _ => Err(Error::config(format!("expected a pair like `l,r`, got `{p}`"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::config("empty configuration grid"));
    }
    Ok(pairs)
}

/// `base` with hard-coded self-attention: the lowest and highest layers
/// use the given pairs, middle layers use `(l,r)` in the encoder and
/// `(l,c)` in the decoder.
pub fn sweep_config(base: &ModelConfig, enc: HeadPair, dec: HeadPair) -> ModelConfig {
    let heads = base.heads;
    let layer_specs = |layers: usize, edge: HeadPair, middle: HeadPair| -> Vec<AttentionSpec> {
        (0..layers)
            .map(|l| {
                let pair = if l == 0 || l + 1 == layers { edge } else { middle };
                AttentionSpec::hard(duplicate_heads(&pair.offsets(), heads))
            })
            .collect()
    };
    let mut cfg = base.clone();
    cfg.enc_self = layer_specs(cfg.enc_layers, enc, HeadPair(Pos::L, Pos::R));
    cfg.dec_self = layer_specs(cfg.dec_layers, dec, HeadPair(Pos::L, Pos::C));
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub enc: HeadPair,
    pub dec: HeadPair,
    pub dev_bleu: f64,
    pub dev_accuracy: f64,
    /// Position in the grid (encoder-major).
    pub grid_index: usize,
}

/// Train every (encoder, decoder) cell with the same budget and seeds and
/// rank by dev BLEU, ties kept in grid order. All configurations are
/// validated before any training starts.
pub fn run_sweep(
    enc_grid: &[HeadPair],
    dec_grid: &[HeadPair],
    base: &ModelConfig,
    train_corpus: &EncodedCorpus,
    dev: &EncodedCorpus,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut cells = Vec::new();
    for &e in enc_grid {
        for &d in dec_grid {
            if d.0 == Pos::R || d.1 == Pos::R {
                return Err(Error::config(format!("decoder configuration {d} attends to a future position")));
            }
            let cfg = sweep_config(base, e, d);
            cfg.validate()?;
            cells.push((e, d, cfg));
        }
    }
    train_cfg.validate()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (grid_index, (enc, dec, cfg)) in cells.into_iter().enumerate() {
        let model = Model::<f64>::new(cfg, model_seed)?;
        let (model, log) = train(model, train_corpus, dev, train_cfg)?;
        let last = log.last();
        let bleu = match last {
            Some(r) if !r.dev_bleu.is_nan() => r.dev_bleu,
            _ => dev_bleu(&model, dev, train_cfg.decode_max_len)?,
        };
        log::info!("sweep {enc} {dec}: dev BLEU {bleu:.2}");
        rows.push(SweepRow {
            enc,
            dec,
            dev_bleu: bleu,
            dev_accuracy: last.map_or(f64::NAN, |r| r.dev_accuracy),
            grid_index,
        });
    }
    rows.sort_by(|a, b| b.dev_bleu.total_cmp(&a.dev_bleu).then(a.grid_index.cmp(&b.grid_index)));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("rank,enc_config,dec_config,dev_bleu\n");
    for (rank, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{},\"{}\",\"{}\",{}", rank + 1, r.enc, r.dec, r.dev_bleu);
    }
    s
}
