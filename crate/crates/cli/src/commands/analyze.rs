use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use hcattn::analysis::{argmax_distance_stats, bins_to_csv, binned_bleu_delta, collect_attention, sentence_off_diagonality};
use hcattn::attention::Site;
use hcattn::eval::translate;
use serde::{Deserialize, Serialize};

use crate::commands::evaluate::eval_pairs;
use crate::config::{echo, resolve, usage, DataConfig, DataFlags};
use crate::setup::{load_model_dir, require};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// Model whose attention is analysed.
    pub model: Option<PathBuf>,
    /// Name of that model in the binned table; defaults to `model`.
    pub label: Option<String>,
    /// Further models for the binned BLEU table, as `label=dir`.
    pub compare: Vec<String>,
    /// Label the deltas are taken against; defaults to the analysed model.
    pub baseline: Option<String>,
    pub split: String,
    pub src: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// `length` (reference length) or `offdiag` (off-diagonality of the
    /// analysed model at `site`).
    pub bin_by: String,
    /// Bin edges; a default set per `bin_by` when empty.
    pub edges: Vec<f64>,
    pub site: String,
    pub threshold: usize,
    pub max_len: usize,
    pub batch_size: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            model: None,
            label: None,
            compare: Vec::new(),
            baseline: None,
            split: "test".into(),
            src: None,
            reference: None,
            bin_by: "length".into(),
            edges: Vec::new(),
            site: "cross".into(),
            threshold: 2,
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
    pub analyze: Options,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            seed: 1,
            out_dir: "runs/analyze".into(),
            data: DataConfig::default(),
            analyze: Options::default(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FlagSet {
    /// Model directory written by `train`
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Extra model for the binned BLEU table, as label=dir (repeatable)
    #[arg(long)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    compare: Vec<String>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// length or offdiag
    #[arg(long)]
    bin_by: Option<String>,
    /// Comma-separated bin edges
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    edges: Vec<f64>,
    /// Attention site used for off-diagonality bins: enc_self, dec_self or cross
    #[arg(long)]
    site: Option<String>,
    /// Distance from the query at which attention counts as off-diagonal
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long = "decode-max-len", id = "decode_max_len")]
    max_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    analyze: FlagSet,
}

pub fn run(file: Option<&Path>, flags: &Flags) -> Result<()> {
    let r: Resolved = resolve(file, flags)?;
    let o = &r.analyze;
    let primary = load_model_dir(require(&o.model, "model")?)?;
    let site: Site = o.site.parse().map_err(|e| usage(format!("{e}")))?;
    let pairs = eval_pairs(&r.data, r.seed, &o.src, &o.reference, &o.split)?;
    let encoded = pairs.encode(&primary.src_vocab, &primary.tgt_vocab);
    let out = &r.out_dir;
    echo(&r, out)?;

    let records = collect_attention(&primary.model, &encoded, o.batch_size)?;
    let stats = argmax_distance_stats(&records, false)?;
    std::fs::write(out.join("locality.csv"), stats.to_csv())?;

    let mut offdiag_csv = String::from("sentence,site,off_diagonality\n");
    let mut per_sentence = vec![0.0; encoded.len()];
    for s in [Site::EncSelf, Site::DecSelf, Site::Cross] {
        for (sentence, v) in sentence_off_diagonality(&records, s, o.threshold) {
            let _ = writeln!(offdiag_csv, "{sentence},{s},{v}");
            if s == site {
                per_sentence[sentence] = v;
            }
        }
    }
    std::fs::write(out.join("offdiag.csv"), offdiag_csv)?;

    let refs: Vec<Vec<String>> = pairs.targets().cloned().collect();
    let (metric, default_edges): (Vec<f64>, Vec<f64>) = match o.bin_by.as_str() {
        "length" => (
            refs.iter().map(|t| t.len() as f64).collect(),
            vec![0.0, 10.0, 20.0, 30.0, 40.0, 60.0, 100.0],
        ),
        "offdiag" => (per_sentence, vec![0.0, 0.1, 0.2, 0.4, 1.0]),
        other => return Err(usage(format!("unknown bin metric `{other}` (length or offdiag)"))),
    };
    let edges = if o.edges.is_empty() { default_edges } else { o.edges.clone() };

    let primary_label = o.label.clone().unwrap_or_else(|| "model".into());
    let mut models = vec![(primary_label.clone(), primary)];
    for c in &o.compare {
        let (label, dir) = c
            .split_once('=')
            .ok_or_else(|| usage(format!("--compare expects label=dir, got `{c}`")))?;
        models.push((label.to_string(), load_model_dir(Path::new(dir))?));
    }
    let mut hyps = Vec::new();
    for (label, m) in &models {
        let sources: Vec<Vec<usize>> = pairs.sources().map(|s| m.src_vocab.encode(s)).collect();
        let out: Vec<Vec<String>> = translate(&m.model, &sources, o.max_len, o.batch_size)?
            .iter()
            .map(|ids| m.tgt_vocab.decode(ids))
            .collect();
        hyps.push((label.clone(), out));
    }
    let baseline = o.baseline.clone().unwrap_or(primary_label);
    let rows = binned_bleu_delta(&refs, &metric, &edges, &hyps, &baseline)?;
    std::fs::write(out.join("bins.csv"), bins_to_csv(&rows))?;

    for h in &stats.heads {
        println!(
            "{} layer {} head {}: mean argmax distance {:+.3} over {} rows",
            h.site, h.layer, h.head, h.mean_distance, h.rows
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

