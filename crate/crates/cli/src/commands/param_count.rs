use std::path::Path;

use anyhow::Result;
use clap::Args;
use hcattn::model::param_count;
use serde::{Deserialize, Serialize};

use crate::config::{resolve, ModelFlags, ModelOptions};
use crate::setup::{model_config, parse_preset};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct Resolved {
    pub model: ModelOptions,
    pub param_count: Options,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Source vocabulary size (embeddings are excluded at 0)
    #[arg(long)]
    src_vocab: Option<usize>,
    #[arg(long)]
    tgt_vocab: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    param_count: FlagSet,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let preset = parse_preset(&r.model.preset)?;
    let o = &r.param_count;
    let cfg = model_config(&r.model, preset, o.src_vocab, o.tgt_vocab, 1.0)?;
    let c = param_count(&cfg);
    println!("total {}", c.total);
    println!("embeddings {}", c.embeddings);
    println!("output {}", c.output);
    println!("feed_forward {}", c.feed_forward);
    println!("attention {}", c.attention());
    println!("learned_attention_weights {}", c.learned_attention_weights());
    println!("learned_heads {}", c.learned_heads);
    println!("site,layer,spec,weight_params,value_params,norm_params");
    for s in &c.sites {
        println!(
            "{},{},{},{},{},{}",
            s.site, s.layer, s.spec, s.weight_params, s.value_params, s.norm_params
        );
    }
    Ok(())
}
