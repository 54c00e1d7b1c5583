use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where an attention sublayer sits in the encoder-decoder stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    EncSelf,
    DecSelf,
    Cross,
}

impl Site {
    pub fn as_str(&self) -> &'static str {
        match self {
            Site::EncSelf => "enc_self",
            Site::DecSelf => "dec_self",
            Site::Cross => "cross",
        }
    }

    pub fn is_causal(&self) -> bool {
        matches!(self, Site::DecSelf)
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Site {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "enc_self" | "encoder" => Ok(Site::EncSelf),
            "dec_self" | "decoder" => Ok(Site::DecSelf),
            "cross" => Ok(Site::Cross),
            other => Err(Error::config(format!("unknown attention site `{other}`"))),
        }
    }
}

/// How much of a Gaussian row is kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// The whole sentence; only the sentence borders cut the tails.
    Full,
    /// Only keys within `w / 2` positions of the center (`w` odd).
    Window(usize),
}

/// Source of the source/target length ratio used by hard cross attention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaSource {
    /// Mean source length over mean target length of the training corpus.
    FromCorpus,
    Fixed(f64),
}

/// Treatment of cross-attention centers that fall outside the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterMode {
    /// Move the center to the nearest valid source index.
    #[default]
    Clamp,
    /// Keep the out-of-range center; only the row tail inside the source remains.
    Truncate,
}

/// Position numbering used in the `floor(gamma * i + offset)` center formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IndexBase {
    #[default]
    Zero,
    One,
}

pub const DEFAULT_SIGMA: f64 = 1.0;

/// Attention strategy of a single sublayer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttentionSpec {
    /// Scaled dot-product attention with learned query/key/value/output
    /// projections. Each head has width `d_model / heads`.
    LearnedMha { num_heads: usize },
    /// Fixed Gaussian self-attention; one head per offset, centered at
    /// `i + offset`.
    HardGaussian {
        offsets: Vec<i64>,
        sigma: f64,
        truncation: Truncation,
    },
    /// Fixed Gaussian cross attention centered at `floor(gamma * i + offset)`.
    HardGaussianCross {
        offsets: Vec<i64>,
        sigma: f64,
        gamma_source: GammaSource,
        #[serde(default)]
        center_mode: CenterMode,
        #[serde(default)]
        index_base: IndexBase,
    },
    /// One fixed odd-length kernel convolved along the sequence.
    FixedConv { kernel: Vec<f64>, causal: bool },
    /// Each position copies the value vector at `i + offset`.
    IndexSelect { offset: i64 },
    /// A single learned head of width `head_dim`.
    SingleLearnedHead { head_dim: usize },
    NoAttention,
}

impl AttentionSpec {
    pub fn learned(num_heads: usize) -> Self {
        AttentionSpec::LearnedMha { num_heads }
    }

    pub fn hard(offsets: Vec<i64>) -> Self {
        AttentionSpec::HardGaussian {
            offsets,
            sigma: DEFAULT_SIGMA,
            truncation: Truncation::Full,
        }
    }

    pub fn hard_cross(offsets: Vec<i64>) -> Self {
        AttentionSpec::HardGaussianCross {
            offsets,
            sigma: DEFAULT_SIGMA,
            gamma_source: GammaSource::FromCorpus,
            center_mode: CenterMode::Clamp,
            index_base: IndexBase::Zero,
        }
    }

    /// Whether the sublayer exists at all.
    pub fn is_present(&self) -> bool {
        !matches!(self, AttentionSpec::NoAttention)
    }

    /// Number of learned attention heads (query/key projections).
    pub fn learned_heads(&self) -> usize {
        match self {
            AttentionSpec::LearnedMha { num_heads } => *num_heads,
            AttentionSpec::SingleLearnedHead { .. } => 1,
            _ => 0,
        }
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match self {
            AttentionSpec::LearnedMha { num_heads } => format!("learned({num_heads})"),
            AttentionSpec::HardGaussian { offsets, .. } => format!("hard{offsets:?}"),
            AttentionSpec::HardGaussianCross { offsets, .. } => format!("hard-cross{offsets:?}"),
            AttentionSpec::FixedConv { kernel, .. } => format!("conv{kernel:?}"),
            AttentionSpec::IndexSelect { offset } => format!("index({offset})"),
            AttentionSpec::SingleLearnedHead { head_dim } => format!("single-head({head_dim})"),
            AttentionSpec::NoAttention => "none".into(),
        }
    }

    /// Check the spec is legal at `site` for a model of width `d_model`.
    pub fn validate(&self, site: Site, d_model: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::config(format!("{site} attention {}: {msg}", self.label())));
        let check_sigma = |sigma: f64| {
            if sigma > 0.0 && sigma.is_finite() {
                Ok(())
            } else {
                fail(format!("sigma must be positive, got {sigma}"))
            }
        };
        let check_heads = |heads: usize| {
            if heads == 0 {
                fail("needs at least one head".into())
            } else if !d_model.is_multiple_of(heads) {
                fail(format!("d_model {d_model} is not divisible by {heads} heads"))
            } else {
                Ok(())
            }
        };
        match self {
            AttentionSpec::LearnedMha { num_heads } => {
                if *num_heads == 0 {
                    return fail("needs at least one head".into());
                }
            }
            AttentionSpec::SingleLearnedHead { head_dim } => {
                if *head_dim == 0 || *head_dim > d_model {
                    return fail(format!("head_dim must be in 1..={d_model}"));
                }
            }
            AttentionSpec::HardGaussian {
                offsets,
                sigma,
                truncation,
            } => {
                if site == Site::Cross {
                    return fail("cross attention needs the length-ratio variant".into());
                }
                check_sigma(*sigma)?;
                check_heads(offsets.len())?;
                if let Some(&o) = offsets.iter().find(|o| o.abs() > 1) {
                    return fail(format!("self-attention offsets must be -1, 0 or +1, got {o}"));
                }
                if site.is_causal() && offsets.iter().any(|&o| o > 0) {
                    return fail("offset +1 attends to future positions".into());
                }
                if let Truncation::Window(w) = truncation {
                    if w % 2 == 0 {
                        return fail(format!("window {w} must be odd and at least 1"));
                    }
                }
            }
            AttentionSpec::HardGaussianCross {
                offsets,
                sigma,
                gamma_source,
                ..
            } => {
                if site != Site::Cross {
                    return fail("only valid for cross attention".into());
                }
                check_sigma(*sigma)?;
                check_heads(offsets.len())?;
                if let GammaSource::Fixed(g) = gamma_source {
                    if !(*g > 0.0 && g.is_finite()) {
                        return fail(format!("gamma must be positive, got {g}"));
                    }
                }
            }
            AttentionSpec::FixedConv { kernel, causal } => {
                if site == Site::Cross {
                    return fail("convolution is only defined for self-attention".into());
                }
                if kernel.len() % 2 == 0 {
                    return fail(format!("kernel length {} must be odd", kernel.len()));
                }
                let center = kernel.len() / 2;
                if site.is_causal() && !causal && kernel[center + 1..].iter().any(|&w| w != 0.0) {
                    return fail("non-causal taps reach future positions".into());
                }
            }
            AttentionSpec::IndexSelect { offset } => {
                if site == Site::Cross {
                    return fail("indexing is only defined for self-attention".into());
                }
                if site.is_causal() && *offset > 0 {
                    return fail("positive offset reads a future position".into());
                }
            }
            AttentionSpec::NoAttention => {}
        }
        Ok(())
    }
}
