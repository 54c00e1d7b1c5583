//! Measurements over captured attention: head locality, off-diagonality and
//! BLEU deltas binned by a per-sentence metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::attention::Site;
use crate::autograd::Tape;
use crate::data::{Batch, EncodedCorpus};
use crate::error::{Error, Result};
use crate::eval::corpus_bleu;
use crate::model::{AttentionRecord, Model, Pass};
use crate::scalar::Scalar;

/// Mean argmax distance of one head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadLocality {
    pub site: Site,
    pub layer: usize,
    pub head: usize,
    pub mean_distance: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalityStats {
    /// Ordered by (site, layer, head).
    pub heads: Vec<HeadLocality>,
}

impl LocalityStats {
    pub fn get(&self, site: Site, layer: usize, head: usize) -> Option<&HeadLocality> {
        self.heads
            .iter()
            .find(|h| h.site == site && h.layer == layer && h.head == head)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("site,layer,head,mean_argmax_distance,n_rows\n");
        for h in &self.heads {
            let _ = writeln!(s, "{},{},{},{},{}", h.site, h.layer, h.head, h.mean_distance, h.rows);
        }
        s
    }
}

/// Position of the largest weight, lowest index on ties; `None` when the
/// row has no attendable key.
pub fn row_argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &w) in row.iter().enumerate() {
        if w > 0.0 && best.is_none_or(|(_, b)| w > b) {
            best = Some((j, w));
        }
    }
    best.map(|(j, _)| j)
}

/// Mean of `argmax_j(row_i) - i` per head over all records (signed), or of
/// its absolute value.
pub fn argmax_distance_stats(records: &[AttentionRecord], absolute: bool) -> Result<LocalityStats> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut acc: BTreeMap<(Site, usize, usize), (i64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry((r.site, r.layer, r.head)).or_default();
        for (i, row) in r.rows.iter().enumerate() {
            if let Some(j) = row_argmax(row) {
                let d = j as i64 - i as i64;
                e.0 += if absolute { d.abs() } else { d };
                e.1 += 1;
            }
        }
    }
    // integer sums keep the aggregation order-independent
    Ok(LocalityStats {
        heads: acc
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|((site, layer, head), (sum, rows))| HeadLocality {
                site,
                layer,
                head,
                mean_distance: sum as f64 / rows as f64,
                rows,
            })
            .collect(),
    })
}

pub const DEFAULT_THRESHOLD: usize = 2;

/// Fraction of rows (one per query token) whose argmax lies at least
/// `threshold` positions from the query.
pub fn off_diagonality(rows: &[Vec<f64>], threshold: usize) -> f64 {
    let (hits, total) = off_diagonal_counts(rows, threshold);
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn off_diagonal_counts(rows: &[Vec<f64>], threshold: usize) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row_argmax(row) {
            total += 1;
            hits += (j.abs_diff(i) >= threshold) as usize;
        }
    }
    (hits, total)
}

/// Off-diagonality per sentence at `site`, pooling the rows of every layer
/// and head.
pub fn sentence_off_diagonality(records: &[AttentionRecord], site: Site, threshold: usize) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.site == site) {
        let (h, t) = off_diagonal_counts(&r.rows, threshold);
        let e = acc.entry(r.sentence).or_default();
        e.0 += h;
        e.1 += t;
    }
    acc.into_iter()
        .map(|(s, (h, t))| (s, if t == 0 { 0.0 } else { h as f64 / t as f64 }))
        .collect()
}

/// Teacher-forced attention records for every pair of `corpus`, labelled by
/// corpus index.
pub fn collect_attention<T: Scalar>(
    model: &Model<T>,
    corpus: &EncodedCorpus,
    batch_size: usize,
) -> Result<Vec<AttentionRecord>> {
    let mut records = Vec::new();
    let indices: Vec<usize> = (0..corpus.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = Batch::from_corpus(corpus, chunk);
        let tape = Tape::inference();
        let p = model.params().bind(&tape);
        let mut pass = Pass::capturing(batch.ids.clone());
        model.forward_with(&p, &batch, &mut pass)?;
        records.append(&mut pass.records);
    }
    Ok(records)
}

/// Half-open bins `[edges[k], edges[k+1])`; the last bin also holds its
/// upper edge so that e.g. `[0, 0.5, 1]` partitions `[0, 1]`.
pub fn bin_of(edges: &[f64], value: f64) -> Option<usize> {
    let k = edges.len().checked_sub(1)?;
    (0..k).find(|&b| {
        let (lo, hi) = (edges[b], edges[b + 1]);
        (lo <= value && value < hi) || (b + 1 == k && value == hi)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub model: String,
    /// `None` when no sentence falls in the bin.
    pub bleu: Option<f64>,
    pub delta: Option<f64>,
}

/// Per-bin corpus BLEU of each hypothesis set and its difference to the
/// baseline set. Membership is decided by `metric[i]` of reference `i`.
pub fn binned_bleu_delta<S: Eq + std::hash::Hash + Clone>(
    references: &[Vec<S>],
    metric: &[f64],
    edges: &[f64],
    models: &[(String, Vec<Vec<S>>)],
    baseline: &str,
) -> Result<Vec<BinRow>> {
    if metric.len() != references.len() || models.iter().any(|(_, h)| h.len() != references.len()) {
        return Err(Error::Alignment {
            src_lines: references.len(),
            tgt_lines: metric.len(),
        });
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("bin edges must be strictly increasing with at least two entries"));
    }
    let base = models
        .iter()
        .find(|(n, _)| n == baseline)
        .ok_or_else(|| Error::config(format!("baseline `{baseline}` is not among the models")))?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); edges.len() - 1];
    for (i, &m) in metric.iter().enumerate() {
        if let Some(b) = bin_of(edges, m) {
            members[b].push(i);
        }
    }
    let bleu_of = |hyps: &[Vec<S>], idx: &[usize]| -> Result<Option<f64>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let h: Vec<Vec<S>> = idx.iter().map(|&i| hyps[i].clone()).collect();
        let r: Vec<Vec<S>> = idx.iter().map(|&i| references[i].clone()).collect();
        corpus_bleu(&h, &r).map(Some)
    };
    let mut rows = Vec::new();
    for (b, idx) in members.iter().enumerate() {
        let base_bleu = bleu_of(&base.1, idx)?;
        for (name, hyps) in models {
            let bleu = bleu_of(hyps, idx)?;
            rows.push(BinRow {
                bin_lo: edges[b],
                bin_hi: edges[b + 1],
                model: name.clone(),
                bleu,
                delta: bleu.zip(base_bleu).map(|(x, y)| x - y),
            });
        }
    }
    Ok(rows)
}

pub fn bins_to_csv(rows: &[BinRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("bin_lo,bin_hi,model,bleu,delta\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.bin_lo,
            r.bin_hi,
            r.model,
            opt(r.bleu),
            opt(r.delta)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_rows(argmaxes: &[usize], n: usize) -> Vec<Vec<f64>> {
        argmaxes
            .iter()
            .map(|&j| (0..n).map(|k| if k == j { 0.9 } else { 0.01 }).collect())
            .collect()
    }

    fn record(rows: Vec<Vec<f64>>, head: usize, sentence: usize) -> AttentionRecord {
        AttentionRecord {
            site: Site::DecSelf,
            layer: 0,
            head,
            sentence,
            learned: true,
            rows,
        }
    }

    #[test]
    fn off_diagonality_counts_far_argmaxes() {
        // distances 0, 1, 3, 2, 0
        let rows = one_hot_rows(&[0, 2, 5, 1, 4], 6);
        assert_eq!(off_diagonality(&rows, 2), 0.4);
        assert_eq!(off_diagonality(&one_hot_rows(&[0, 1, 2], 3), 2), 0.0);
    }

    #[test]
    fn off_diagonality_ignores_scale() {
        let rows = one_hot_rows(&[3, 1, 2, 0], 4);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * 7.0).collect()).collect();
        assert_eq!(off_diagonality(&rows, 2), off_diagonality(&scaled, 2));
    }

    #[test]
    fn signed_mean_per_head() {
        // argmaxes at +2, +2, -1 relative to the query
        let rec = record(one_hot_rows(&[2, 3, 1], 4), 0, 0);
        let s = argmax_distance_stats(std::slice::from_ref(&rec), false).unwrap();
        assert_eq!(s.heads[0].mean_distance, 1.0);
        assert_eq!(s.heads[0].rows, 3);
        let a = argmax_distance_stats(&[rec], true).unwrap();
        assert_eq!(a.heads[0].mean_distance, 5.0 / 3.0);
        assert!(argmax_distance_stats(&[], false).is_err());
    }

    #[test]
    fn all_zero_rows_are_skipped() {
        let rec = record(vec![vec![0.0, 0.0], vec![0.0, 1.0]], 0, 0);
        let s = argmax_distance_stats(&[rec], false).unwrap();
        assert_eq!(s.heads[0].rows, 1);
    }

    #[test]
    fn sentence_pooling() {
        let recs = vec![
            record(one_hot_rows(&[0, 1], 2), 0, 7),
            record(one_hot_rows(&[0, 0, 0], 3), 1, 7),
            record(one_hot_rows(&[0], 1), 0, 9),
        ];
        let m = sentence_off_diagonality(&recs, Site::DecSelf, 2);
        assert_eq!(m[&7], 0.2);
        assert_eq!(m[&9], 0.0);
        assert!(sentence_off_diagonality(&recs, Site::Cross, 2).is_empty());
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn binning_by_reference_length() {
        let refs = vec![toks("a b c d e"), toks("a b c d e f g h i j k l")];
        let lens: Vec<f64> = refs.iter().map(|r| r.len() as f64).collect();
        let hyps = refs.clone();
        let rows = binned_bleu_delta(
            &refs,
            &lens,
            &[0.0, 10.0, f64::INFINITY],
            &[("base".into(), hyps.clone()), ("same".into(), hyps)],
            "base",
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.delta == Some(0.0) && r.bleu == Some(100.0)));
    }

    #[test]
    fn per_bin_bleu_matches_direct_computation() {
        let refs = vec![toks("a b c d"), toks("a b c d e"), toks("x y z w v u"), toks("p q r s t u v")];
        let h1 = vec![toks("a b c e"), toks("a b c d e"), toks("x y z w"), toks("p q r s t u v")];
        let h2 = vec![toks("a b c d"), toks("a c d e"), toks("x y z w v u"), toks("p q s r t u v")];
        let metric = [4.0, 5.0, 6.0, 7.0];
        let models = vec![("m1".to_string(), h1.clone()), ("m2".to_string(), h2.clone())];
        let rows = binned_bleu_delta(&refs, &metric, &[0.0, 5.5, 100.0], &models, "m1").unwrap();
        let direct = |h: &[Vec<&str>], r: &[Vec<&str>]| corpus_bleu(h, r).unwrap();
        let lo1 = direct(&h1[..2], &refs[..2]);
        let lo2 = direct(&h2[..2], &refs[..2]);
        let hi2 = direct(&h2[2..], &refs[2..]);
        let hi1 = direct(&h1[2..], &refs[2..]);
        assert_eq!(rows[1].bleu, Some(lo2));
        assert_eq!(rows[1].delta, Some(lo2 - lo1));
        assert_eq!(rows[3].delta, Some(hi2 - hi1));
    }

    #[test]
    fn empty_bins_are_absent() {
        let refs = vec![toks("a b")];
        let rows = binned_bleu_delta(&refs, &[0.1], &[0.0, 0.5, 1.0], &[("m".into(), refs.clone())], "m").unwrap();
        assert_eq!(rows[1].bleu, None);
        assert!(bins_to_csv(&rows).ends_with("0.5,1,m,,\n"));
        assert_eq!(bin_of(&[0.0, 0.5, 1.0], 1.0), Some(1));
        assert_eq!(bin_of(&[0.0, 0.5, 1.0], 1.5), None);
    }
}
