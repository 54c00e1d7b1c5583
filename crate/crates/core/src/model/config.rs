use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{round_robin_cross_offsets, AttentionSpec, GammaSource, Site};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Positional {
    #[default]
    Sinusoidal,
}

/// Layer widths and counts shared by every preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    /// Used for both the encoder and the decoder.
    pub layers: usize,
}

impl Dims {
    /// Small architecture for low-resource pairs.
    pub const SMALL: Dims = Dims {
        d_model: 288,
        d_ff: 507,
        heads: 4,
        layers: 5,
    };

    /// Standard base Transformer.
    pub const BASE: Dims = Dims {
        d_model: 512,
        d_ff: 2048,
        heads: 8,
        layers: 6,
    };

    pub fn new(d_model: usize, d_ff: usize, heads: usize, layers: usize) -> Self {
        Dims {
            d_model,
            d_ff,
            heads,
            layers,
        }
    }
}

impl FromStr for Dims {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Dims::SMALL),
            "base" => Ok(Dims::BASE),
            other => Err(Error::config(format!("unknown dims `{other}` (expected small or base)"))),
        }
    }
}

/// Named architecture families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PresetKind {
    /// Learned attention everywhere.
    Base,
    /// Hard-coded self-attention, learned cross attention.
    HcSa,
    /// Hard-coded self and cross attention.
    HcAll,
    /// Hard-coded self-attention and one learned cross head in the last
    /// decoder layer.
    ShX,
}

/// A preset plus optional ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Preset {
    pub kind: PresetKind,
    /// Drop every self-attention sublayer.
    pub no_sa: bool,
    /// Drop every feed-forward sublayer.
    pub no_ff: bool,
}

impl Preset {
    pub const BASE: Preset = Preset::plain(PresetKind::Base);
    pub const HC_SA: Preset = Preset::plain(PresetKind::HcSa);
    pub const HC_ALL: Preset = Preset::plain(PresetKind::HcAll);
    pub const SH_X: Preset = Preset::plain(PresetKind::ShX);
    pub const NO_SA: Preset = Preset {
        kind: PresetKind::Base,
        no_sa: true,
        no_ff: false,
    };

    pub const fn plain(kind: PresetKind) -> Self {
        Preset {
            kind,
            no_sa: false,
            no_ff: false,
        }
    }

    pub fn without_ff(self) -> Self {
        Preset { no_ff: true, ..self }
    }

    pub fn without_self_attention(self) -> Self {
        Preset { no_sa: true, ..self }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            PresetKind::Base => "BASE",
            PresetKind::HcSa => "HC_SA",
            PresetKind::HcAll => "HC_ALL",
            PresetKind::ShX => "SH_X",
        };
        f.write_str(base)?;
        if self.no_sa {
            f.write_str("/NO_SA")?;
        }
        if self.no_ff {
            f.write_str("/NO_FF")?;
        }
        Ok(())
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// `BASE`, `HC_SA`, `HC_ALL`, `SH_X` or `NO_SA`, optionally followed by
    /// `/NO_SA` and `/NO_FF` modifiers (e.g. `SH_X/NO_SA`, `HC_SA/NO_FF`).
    fn from_str(s: &str) -> Result<Self> {
        let norm = |p: &str| p.trim().to_ascii_uppercase().replace('-', "_");
        let mut parts = s.split(['/', '+']).map(norm);
        let head = parts.next().unwrap_or_default();
        let mut preset = match head.as_str() {
            "BASE" => Preset::BASE,
            "HC_SA" => Preset::HC_SA,
            "HC_ALL" => Preset::HC_ALL,
            "SH_X" => Preset::SH_X,
            "NO_SA" => Preset::NO_SA,
            "NO_FF" => Preset::BASE.without_ff(),
            _ => return Err(Error::config(format!("unknown preset `{s}`"))),
        };
        for m in parts {
            match m.as_str() {
                "NO_SA" => preset.no_sa = true,
                "NO_FF" => preset.no_ff = true,
                _ => return Err(Error::config(format!("unknown preset modifier `{m}` in `{s}`"))),
            }
        }
        Ok(preset)
    }
}

/// Complete architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub enc_self: Vec<AttentionSpec>,
    pub dec_self: Vec<AttentionSpec>,
    pub cross: Vec<AttentionSpec>,
    pub use_ff: bool,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub positional: Positional,
    /// Corpus length ratio used by cross specs with `GammaSource::FromCorpus`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

pub const DEFAULT_MAX_LEN: usize = 256;

/// Repeat `pattern` until `heads` entries, e.g. `[-1, 1]` -> `[-1, 1, -1, 1]`.
pub fn duplicate_heads(pattern: &[i64], heads: usize) -> Vec<i64> {
    pattern.iter().copied().cycle().take(heads).collect()
}

impl ModelConfig {
    /// Architecture of a named preset at the given dims.
    pub fn preset(preset: Preset, dims: Dims) -> Self {
        let Dims {
            d_model,
            d_ff,
            heads,
            layers,
        } = dims;
        let learned = AttentionSpec::learned(heads);
        let enc_hard = AttentionSpec::hard(duplicate_heads(&[-1, 1], heads));
        let dec_hard = AttentionSpec::hard(duplicate_heads(&[-1, 0], heads));
        let (enc_self, dec_self) = match preset.kind {
            PresetKind::Base => (learned.clone(), learned.clone()),
            _ => (enc_hard, dec_hard),
        };
        let cross: Vec<AttentionSpec> = match preset.kind {
            PresetKind::Base | PresetKind::HcSa => vec![learned; layers],
            PresetKind::HcAll => vec![AttentionSpec::hard_cross(round_robin_cross_offsets(heads)); layers],
            PresetKind::ShX => (0..layers)
                .map(|l| {
                    if l + 1 == layers {
                        AttentionSpec::SingleLearnedHead {
                            head_dim: d_model / heads.max(1),
                        }
                    } else {
                        AttentionSpec::NoAttention
                    }
                })
                .collect(),
        };
        let (enc_self, dec_self) = if preset.no_sa {
            (AttentionSpec::NoAttention, AttentionSpec::NoAttention)
        } else {
            (enc_self, dec_self)
        };
        ModelConfig {
            d_model,
            d_ff,
            enc_layers: layers,
            dec_layers: layers,
            heads,
            enc_self: vec![enc_self; layers],
            dec_self: vec![dec_self; layers],
            cross,
            use_ff: !preset.no_ff,
            src_vocab: 0,
            tgt_vocab: 0,
            max_len: DEFAULT_MAX_LEN,
            dropout: 0.0,
            positional: Positional::Sinusoidal,
            gamma: None,
            ln_eps: default_ln_eps(),
        }
    }

    pub fn with_vocab(mut self, src_vocab: usize, tgt_vocab: usize) -> Self {
        self.src_vocab = src_vocab;
        self.tgt_vocab = tgt_vocab;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// Whether some cross site needs the corpus length ratio.
    pub fn needs_corpus_gamma(&self) -> bool {
        self.cross.iter().any(|s| {
            matches!(
                s,
                AttentionSpec::HardGaussianCross {
                    gamma_source: GammaSource::FromCorpus,
                    ..
                }
            )
        })
    }

    /// All (site, layer, spec) triples in model order.
    pub fn sites(&self) -> impl Iterator<Item = (Site, usize, &AttentionSpec)> {
        let enc = self.enc_self.iter().enumerate().map(|(l, s)| (Site::EncSelf, l, s));
        let dec = self.dec_self.iter().enumerate().map(|(l, s)| (Site::DecSelf, l, s));
        let cross = self.cross.iter().enumerate().map(|(l, s)| (Site::Cross, l, s));
        enc.chain(dec).chain(cross)
    }

    /// Total learned attention heads (query/key-bearing heads).
    pub fn learned_heads(&self) -> usize {
        self.sites().map(|(_, _, s)| s.learned_heads()).sum()
    }

    /// Width of one standard learned head.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.use_ff && self.d_ff == 0 {
            return Err(Error::config("d_ff must be positive when feed-forward layers are used"));
        }
        if self.enc_self.len() != self.enc_layers
            || self.dec_self.len() != self.dec_layers
            || self.cross.len() != self.dec_layers
        {
            return Err(Error::config(format!(
                "per-layer spec lists ({}, {}, {}) do not match layer counts ({}, {})",
                self.enc_self.len(),
                self.dec_self.len(),
                self.cross.len(),
                self.enc_layers,
                self.dec_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!("length ratio {g} must be positive")));
            }
        }
        for (site, _, spec) in self.sites() {
            spec.validate(site, self.d_model)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hc_sa_small_duplicates_heads() {
        let c = ModelConfig::preset(Preset::HC_SA, Dims::SMALL);
        assert_eq!(c.enc_self[0], AttentionSpec::hard(vec![-1, 1, -1, 1]));
        assert_eq!(c.dec_self[4], AttentionSpec::hard(vec![-1, 0, -1, 0]));
        assert_eq!(c.cross[2], AttentionSpec::learned(4));
        c.validate().unwrap();
    }

    #[test]
    fn base_is_learned_everywhere() {
        let c = ModelConfig::preset(Preset::BASE, Dims::BASE);
        assert_eq!(c.enc_layers, 6);
        assert!(c.sites().all(|(_, _, s)| *s == AttentionSpec::learned(8)));
    }

    #[test]
    fn sh_x_has_single_final_cross_head() {
        let c = ModelConfig::preset(Preset::SH_X, Dims::SMALL);
        let head = AttentionSpec::SingleLearnedHead { head_dim: 72 };
        let none = AttentionSpec::NoAttention;
        assert_eq!(c.cross, vec![none.clone(), none.clone(), none.clone(), none, head]);
        assert_eq!(c.learned_heads(), 1);
    }

    #[test]
    fn hc_all_has_no_learned_heads() {
        let c = ModelConfig::preset(Preset::HC_ALL, Dims::SMALL);
        assert_eq!(c.learned_heads(), 0);
        assert!(c.needs_corpus_gamma());
    }

    #[test]
    fn ablation_modifiers() {
        let p: Preset = "SH_X/NO_SA".parse().unwrap();
        assert!(p.no_sa && !p.no_ff);
        let c = ModelConfig::preset(p, Dims::SMALL);
        assert!(c.enc_self.iter().all(|s| !s.is_present()));
        let p: Preset = "hc-sa/no_ff".parse().unwrap();
        assert_eq!(p, Preset::HC_SA.without_ff());
        assert!(!ModelConfig::preset(p, Dims::SMALL).use_ff);
        assert_eq!("NO_SA".parse::<Preset>().unwrap(), Preset::NO_SA);
        assert_eq!(Preset::SH_X.without_self_attention().to_string(), "SH_X/NO_SA");
        assert!("TRANSFORMER".parse::<Preset>().is_err());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut c = ModelConfig::preset(Preset::HC_SA, Dims::new(16, 32, 3, 2));
        assert!(c.validate().is_err());
        c = ModelConfig::preset(Preset::HC_SA, Dims::new(16, 32, 2, 2));
        c.dec_self[0] = AttentionSpec::hard(vec![-1, 1]);
        assert!(c.validate().is_err());
        c = ModelConfig::preset(Preset::HC_SA, Dims::new(16, 32, 2, 2));
        c.cross.pop();
        assert!(c.validate().is_err());
    }
}
