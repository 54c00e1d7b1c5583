//! Efficiency measurements: largest trainable batch under a memory budget
//! and greedy decoding throughput.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{pair_cost, Batch, EncodedCorpus, EOS};
use crate::error::{Error, Result};
use crate::eval::translate;
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::memory;
use crate::train::{train_step, Adam, AdamConfig};

/// How batch tokens are counted in every report.
pub const TOKEN_RULE: &str = "source and target sides, padding and <s>/</s> included";

/// Largest batch of `probe` pairs (taken cyclically) whose token cost stays
/// within `budget`.
pub fn probe_batch(probe: &EncodedCorpus, budget: usize) -> Option<Batch> {
    if probe.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = Vec::new();
    let (mut s, mut t) = (0, 0);
    loop {
        let i = idx.len() % probe.len();
        let (ps, pt) = (probe.pairs[i].0.len(), probe.pairs[i].1.len());
        let (ns, nt) = (s.max(ps), t.max(pt));
        if (idx.len() + 1) * pair_cost(ns, nt) > budget {
            break;
        }
        idx.push(i);
        (s, t) = (ns, nt);
    }
    (!idx.is_empty()).then(|| Batch::from_corpus(probe, &idx))
}

/// Accounted bytes of one full training step (forward, backward, update)
/// on `batch`: the peak of live tensor buffers during the step plus the
/// resident parameters and both Adam moments.
pub fn step_footprint<T: Scalar>(model: &Model<T>, batch: &Batch) -> Result<usize> {
    let mut m = model.clone();
    let mut adam = Adam::new(AdamConfig::default(), m.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let resident = 3 * model.num_params() * std::mem::size_of::<T>();
    memory::reset_peak();
    let base = memory::current_bytes();
    train_step(&mut m, &mut adam, batch, 1e-4, 0.0, &mut rng)?;
    Ok(memory::peak_bytes() - base + resident)
}

/// Largest token budget whose probe batch trains within `memory_budget`
/// accounted bytes, found by doubling and then binary search.
pub fn max_tokens_per_batch<T: Scalar>(model: &Model<T>, memory_budget: usize, probe: &EncodedCorpus) -> Result<usize> {
    let smallest = probe
        .pairs
        .iter()
        .map(|(s, t)| pair_cost(s.len(), t.len()))
        .max()
        .ok_or(Error::EmptyCorpus)?;
    let fits = |budget: usize| -> Result<bool> {
        match probe_batch(probe, budget) {
            Some(b) => Ok(step_footprint(model, &b)? <= memory_budget),
            None => Ok(false),
        }
    };
    if !fits(smallest)? {
        let needed = step_footprint(model, &probe_batch(probe, smallest).ok_or(Error::EmptyCorpus)?)?;
        return Err(Error::BudgetTooSmall {
            budget: memory_budget,
            needed,
        });
    }
    let (mut lo, mut hi) = (smallest, smallest * 2);
    while fits(hi)? {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Make `</s>` unreachable in greedy decoding so every sentence runs to
/// `max_len`. Untrained models otherwise stop at arbitrary points, which
/// makes their throughput incomparable.
pub fn forbid_eos<T: Scalar>(model: &mut Model<T>) -> Result<()> {
    let mut bias = model
        .params()
        .get("out.bias")
        .ok_or_else(|| Error::UnknownParam("out.bias".into()))?
        .clone();
    bias.data_mut()[EOS] = T::of(-1e9);
    model.params_mut().set("out.bias", bias)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Throughput {
    /// Sentences per second of each timed run.
    pub runs: Vec<f64>,
    pub run_secs: Vec<f64>,
    pub mean: f64,
    pub sentences: usize,
    pub batch_size: usize,
    pub max_len: usize,
}

/// Greedy-decode `sources` `runs` times after one untimed warm-up run;
/// reports sentences per second per run and their mean.
pub fn decode_throughput<T: Scalar>(
    model: &Model<T>,
    sources: &[Vec<usize>],
    batch_size: usize,
    runs: usize,
    max_len: usize,
) -> Result<Throughput> {
    if runs == 0 {
        return Err(Error::config("at least one timed run is required"));
    }
    if sources.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    translate(model, sources, max_len, batch_size)?;
    let mut rates = Vec::with_capacity(runs);
    let mut secs = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = translate(model, sources, max_len, batch_size)?;
        let s = start.elapsed().as_secs_f64().max(1e-9);
        rates.push(out.len() as f64 / s);
        secs.push(s);
    }
    let mean = rates.iter().sum::<f64>() / runs as f64;
    Ok(Throughput {
        runs: rates,
        run_secs: secs,
        mean,
        sentences: sources.len(),
        batch_size,
        max_len,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub preset: String,
    pub max_tokens: usize,
    pub throughput: Throughput,
    pub threads: usize,
    pub float_bits: u32,
    pub token_rule: &'static str,
}

impl ProfileReport {
    pub fn csv_header(runs: usize) -> String {
        let cols: Vec<String> = (1..=runs).map(|r| format!("run{r}")).collect();
        format!("preset,max_tokens,sent_per_sec,{},threads,float_bits", cols.join(","))
    }

    pub fn csv_row(&self) -> String {
        let runs: Vec<String> = self.throughput.runs.iter().map(f64::to_string).collect();
        format!(
            "{},{},{},{},{},{}",
            self.preset,
            self.max_tokens,
            self.throughput.mean,
            runs.join(","),
            self.threads,
            self.float_bits
        )
    }
}

pub fn reports_to_csv(reports: &[ProfileReport]) -> String {
    let runs = reports.first().map_or(5, |r| r.throughput.runs.len());
    let mut s = ProfileReport::csv_header(runs);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, ModelConfig, Preset};

    fn probe() -> EncodedCorpus {
        EncodedCorpus {
            pairs: vec![(vec![4, 5, 6, 7], vec![5, 6, 7, 4]); 3],
        }
    }

    fn model() -> Model<f64> {
        let cfg = ModelConfig::preset(Preset::BASE, Dims::new(8, 16, 2, 1)).with_vocab(8, 8);
        Model::new(cfg, 0).unwrap()
    }

    #[test]
    fn probe_batch_respects_budget() {
        let b = probe_batch(&probe(), 40).unwrap();
        assert_eq!(b.size(), 3);
        assert!(b.token_cost() <= 40);
        assert!(probe_batch(&probe(), 11).is_none());
    }

    #[test]
    fn budget_monotone() {
        let m = model();
        let f0 = step_footprint(&m, &probe_batch(&probe(), 24).unwrap()).unwrap();
        let a = max_tokens_per_batch(&m, 2 * f0, &probe()).unwrap();
        assert!(a >= 24);
        let b = max_tokens_per_batch(&m, 4 * f0, &probe()).unwrap();
        assert!(b >= a);
        assert!(matches!(max_tokens_per_batch(&m, 10, &probe()), Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn forbidden_eos_runs_to_max_len() {
        let mut m = model();
        forbid_eos(&mut m).unwrap();
        let out = translate(&m, &[vec![4, 5], vec![6]], 7, 2).unwrap();
        assert!(out.iter().all(|s| s.len() == 7));
    }

    #[test]
    fn throughput_report_is_consistent() {
        let t = decode_throughput(&model(), &[vec![4, 5], vec![6]], 2, 5, 4).unwrap();
        assert_eq!(t.runs.len(), 5);
        let mean = t.runs.iter().sum::<f64>() / 5.0;
        assert!((t.mean - mean).abs() < 1e-9);
        let r = ProfileReport {
            preset: "BASE".into(),
            max_tokens: 10,
            throughput: t,
            threads: 1,
            float_bits: 64,
            token_rule: TOKEN_RULE,
        };
        let csv = reports_to_csv(&[r]);
        assert!(csv.starts_with("preset,max_tokens,sent_per_sec,run1,run2,run3,run4,run5,threads,float_bits\nBASE,10,"));
    }
}
