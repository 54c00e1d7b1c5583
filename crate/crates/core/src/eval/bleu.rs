use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

fn ngram_counts<S: Eq + Hash>(tokens: &[S], n: usize) -> HashMap<&[S], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add_pair<S: Eq + Hash>(&mut self, hyp: &[S], reference: &[S]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            // clipped counts
            self.matches[n - 1] += h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }

    /// Score in `[0, 100]`. The k-th order with no matches contributes
    /// precision `1 / 2^k`; orders longer than every hypothesis have no
    /// n-grams at all and are left out of the mean.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut smooth = 1.0;
        let orders = self.totals.iter().filter(|&&t| t > 0).count();
        for n in 0..orders {
            let p = if self.matches[n] == 0 {
                smooth *= 2.0;
                1.0 / smooth
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            };
            log_sum += p.ln();
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

/// Corpus-level BLEU with exponential smoothing and brevity penalty on
/// corpus totals.
pub fn corpus_bleu<S: Eq + Hash>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Alignment {
            src_lines: hypotheses.len(),
            tgt_lines: references.len(),
        });
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add_pair(h, r);
    }
    Ok(stats.score())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn worked_example() {
        let b = corpus_bleu(&[toks("a b c d")], &[toks("a b c e")]).unwrap();
        let want = 100.0 * (0.75f64 * (2.0 / 3.0) * 0.5 * 0.5).powf(0.25);
        assert!((b - want).abs() < 1e-9);
        assert!((b - 59.46).abs() < 0.01);
    }

    #[test]
    fn perfect_and_empty() {
        let x = vec![toks("the cat sat on the mat"), toks("a b")];
        assert!((corpus_bleu(&x, &x).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(corpus_bleu(&[vec![]], &[toks("a b")]).unwrap(), 0.0);
        assert!(corpus_bleu::<&str>(&[], &[]).is_err());
    }

    #[test]
    fn brevity_penalty_applies() {
        let b = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e f g h")]).unwrap();
        assert!((b - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn short_corpus_uses_available_orders() {
        let x = vec![toks("a"), toks("b c")];
        assert!((corpus_bleu(&x, &x).unwrap() - 100.0).abs() < 1e-9);
        // unigrams 2/3, bigrams 0/2 -> 1/2, trigrams 0/1 -> 1/4, no 4-grams
        let b = corpus_bleu(&[toks("a b d")], &[toks("a c b")]).unwrap();
        assert!((b - 100.0 * ((2.0 / 3.0f64) * 0.5 * 0.25).powf(1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn clipping_limits_repeats() {
        let mut s = BleuStats::default();
        s.add_pair(&toks("the the the"), &toks("the cat"));
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 3);
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in prop::collection::vec(
            (prop::collection::vec(0u8..5, 0..8), prop::collection::vec(0u8..5, 1..8)), 1..10),
            rot in 0usize..10) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let a = corpus_bleu(&h, &r).unwrap();
            let k = rot % pairs.len();
            let mut rotated = pairs.clone();
            rotated.rotate_left(k);
            rotated.reverse();
            let (h2, r2): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
            let b = corpus_bleu(&h2, &r2).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&a));
        }

        #[test]
        fn self_bleu_is_100(x in prop::collection::vec(prop::collection::vec(0u8..9, 1..12), 1..6)) {
            prop_assert!((corpus_bleu(&x, &x).unwrap() - 100.0).abs() < 1e-9);
        }
    }
}
