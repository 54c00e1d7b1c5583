use serde::Serialize;

use crate::attention::{AttentionSpec, Site};
use crate::model::config::ModelConfig;

/// Parameters of one attention sublayer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SiteCount {
    pub site: Site,
    pub layer: usize,
    pub spec: String,
    /// Query and key projections: the parameters that shape the weights.
    pub weight_params: usize,
    /// Value and output projections.
    pub value_params: usize,
    /// Layer norm following the sublayer (zero when the sublayer is absent).
    pub norm_params: usize,
}

impl SiteCount {
    pub fn attention_params(&self) -> usize {
        self.weight_params + self.value_params
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub embeddings: usize,
    pub output: usize,
    pub feed_forward: usize,
    pub sites: Vec<SiteCount>,
    pub learned_heads: usize,
}

impl ParamCount {
    /// All attention projection parameters.
    pub fn attention(&self) -> usize {
        self.sites.iter().map(SiteCount::attention_params).sum()
    }

    /// Query/key parameters only; zero when no attention weights are learned.
    pub fn learned_attention_weights(&self) -> usize {
        self.sites.iter().map(|s| s.weight_params).sum()
    }
}

fn linear(n_in: usize, n_out: usize) -> usize {
    n_in * n_out + n_out
}

/// `(query/key, value/output)` parameter counts of one sublayer.
pub fn site_params(spec: &AttentionSpec, d: usize, head_dim: usize) -> (usize, usize) {
    match spec {
        AttentionSpec::LearnedMha { num_heads } => {
            let inner = num_heads * head_dim;
            (2 * linear(d, inner), linear(d, inner) + linear(inner, d))
        }
        AttentionSpec::SingleLearnedHead { head_dim } => {
            (2 * linear(d, *head_dim), linear(d, *head_dim) + linear(*head_dim, d))
        }
        AttentionSpec::HardGaussian { .. }
        | AttentionSpec::HardGaussianCross { .. }
        | AttentionSpec::FixedConv { .. }
        | AttentionSpec::IndexSelect { .. } => (0, 2 * linear(d, d)),
        AttentionSpec::NoAttention => (0, 0),
    }
}

/// Count parameters from the configuration alone.
pub fn param_count(config: &ModelConfig) -> ParamCount {
    let d = config.d_model;
    let head_dim = config.head_dim();
    let norm = 2 * d;
    let sites: Vec<SiteCount> = config
        .sites()
        .map(|(site, layer, spec)| {
            let (weight_params, value_params) = site_params(spec, d, head_dim);
            SiteCount {
                site,
                layer,
                spec: spec.label(),
                weight_params,
                value_params,
                norm_params: if spec.is_present() { norm } else { 0 },
            }
        })
        .collect();
    let ff_layers = if config.use_ff {
        config.enc_layers + config.dec_layers
    } else {
        0
    };
    let feed_forward = ff_layers * (linear(d, config.d_ff) + linear(config.d_ff, d) + norm);
    let embeddings = (config.src_vocab + config.tgt_vocab) * d;
    let output = linear(d, config.tgt_vocab);
    let total = embeddings
        + output
        + feed_forward
        + sites.iter().map(|s| s.attention_params() + s.norm_params).sum::<usize>();
    ParamCount {
        total,
        embeddings,
        output,
        feed_forward,
        learned_heads: config.learned_heads(),
        sites,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{Dims, Preset};

    #[test]
    fn small_site_counts() {
        let d = 288;
        let learned = site_params(&AttentionSpec::learned(4), d, 72);
        assert_eq!(learned.0 + learned.1, 332_928);
        let hard = site_params(&AttentionSpec::hard(vec![-1, 1, -1, 1]), d, 72);
        assert_eq!(hard, (0, 166_464));
        assert_eq!(site_params(&AttentionSpec::NoAttention, d, 72), (0, 0));
    }

    #[test]
    fn hc_sa_saves_half_of_each_self_site() {
        let base = param_count(&ModelConfig::preset(Preset::BASE, Dims::SMALL).with_vocab(100, 120));
        let hc = param_count(&ModelConfig::preset(Preset::HC_SA, Dims::SMALL).with_vocab(100, 120));
        assert_eq!(base.total - hc.total, 10 * 166_464);
    }

    #[test]
    fn hc_all_learns_no_attention_weights() {
        let c = param_count(&ModelConfig::preset(Preset::HC_ALL, Dims::SMALL));
        assert_eq!(c.learned_attention_weights(), 0);
        assert_eq!(c.learned_heads, 0);
        let sh = param_count(&ModelConfig::preset(Preset::SH_X, Dims::SMALL));
        assert_eq!(sh.learned_heads, 1);
        assert_eq!(sh.learned_attention_weights(), 2 * (288 * 72 + 72));
    }

    #[test]
    fn no_ff_drops_feed_forward() {
        let c = param_count(&ModelConfig::preset(Preset::BASE.without_ff(), Dims::SMALL));
        assert_eq!(c.feed_forward, 0);
    }
}
