use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::corpus::EncodedCorpus;
use crate::data::vocab::{BOS, EOS, PAD};

/// Right-padded id matrix `[rows, width]` with per-row valid lengths.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Padded {
    pub ids: Vec<usize>,
    pub lens: Vec<usize>,
    pub width: usize,
}

impl Padded {
    /// Pad `seqs` with `<pad>` up to `width` (at least the longest row).
    pub fn new(seqs: &[Vec<usize>], width: usize) -> Self {
        let width = seqs.iter().map(Vec::len).max().unwrap_or(0).max(width);
        let mut ids = Vec::with_capacity(seqs.len() * width);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(PAD, width - s.len()));
        }
        Padded {
            ids,
            lens: seqs.iter().map(Vec::len).collect(),
            width,
        }
    }

    pub fn rows(&self) -> usize {
        self.lens.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.width..r * self.width + self.lens[r]]
    }

    /// `[rows, width]` validity flags.
    pub fn mask(&self) -> Vec<bool> {
        self.lens
            .iter()
            .flat_map(|&l| (0..self.width).map(move |j| j < l))
            .collect()
    }

    /// The same rows padded to a larger width.
    pub fn widened(&self, width: usize) -> Self {
        let seqs: Vec<Vec<usize>> = (0..self.rows()).map(|r| self.row(r).to_vec()).collect();
        Padded::new(&seqs, width)
    }
}

/// Teacher-forcing batch: `src` ends with `</s>`, `tgt_in` starts with
/// `<s>`, `tgt_out` is the target followed by `</s>`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub src: Padded,
    pub tgt_in: Padded,
    pub tgt_out: Padded,
    /// Corpus index of each row.
    pub ids: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(pairs: &[(&[usize], &[usize])], ids: Vec<usize>) -> Self {
        let src: Vec<Vec<usize>> = pairs.iter().map(|(s, _)| with_eos(s)).collect();
        let tgt_in: Vec<Vec<usize>> = pairs
            .iter()
            .map(|(_, t)| std::iter::once(BOS).chain(t.iter().copied()).collect())
            .collect();
        let tgt_out: Vec<Vec<usize>> = pairs.iter().map(|(_, t)| with_eos(t)).collect();
        Batch {
            src: Padded::new(&src, 0),
            tgt_in: Padded::new(&tgt_in, 0),
            tgt_out: Padded::new(&tgt_out, 0),
            ids,
        }
    }

    pub fn from_corpus(corpus: &EncodedCorpus, indices: &[usize]) -> Self {
        let pairs: Vec<(&[usize], &[usize])> = indices
            .iter()
            .map(|&i| (corpus.pairs[i].0.as_slice(), corpus.pairs[i].1.as_slice()))
            .collect();
        Batch::from_pairs(&pairs, indices.to_vec())
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    /// Tokens charged against a batch budget: both sides, padding included,
    /// each sentence counted with `<s>` and `</s>`.
    pub fn token_cost(&self) -> usize {
        self.size() * ((self.src.width + 1) + (self.tgt_in.width + 1))
    }

    /// Non-pad target tokens (including `</s>`).
    pub fn target_tokens(&self) -> usize {
        self.tgt_out.lens.iter().sum()
    }

    /// Same content with extra padding columns on both sides.
    pub fn padded_by(&self, extra_src: usize, extra_tgt: usize) -> Self {
        Batch {
            src: self.src.widened(self.src.width + extra_src),
            tgt_in: self.tgt_in.widened(self.tgt_in.width + extra_tgt),
            tgt_out: self.tgt_out.widened(self.tgt_out.width + extra_tgt),
            ids: self.ids.clone(),
        }
    }
}

fn with_eos(s: &[usize]) -> Vec<usize> {
    s.iter().copied().chain(std::iter::once(EOS)).collect()
}

/// Padded cost of a sentence pair when batched alone.
pub fn pair_cost(src_len: usize, tgt_len: usize) -> usize {
    (src_len + 2) + (tgt_len + 2)
}

/// Token-budget batches of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batches {
    pub batches: Vec<Batch>,
    /// Sentences that exceed the budget on their own.
    pub skipped: usize,
}

impl IntoIterator for Batches {
    type Item = Batch;
    type IntoIter = std::vec::IntoIter<Batch>;
    fn into_iter(self) -> Self::IntoIter {
        self.batches.into_iter()
    }
}

/// Length-bucketed batches whose padded two-sided token cost stays within
/// `max_tokens`. Sentence order within equal lengths and batch order are
/// shuffled by `seed`.
pub fn batch_iterator(corpus: &EncodedCorpus, max_tokens: usize, seed: u64) -> Batches {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| (corpus.pairs[i].0.len(), corpus.pairs[i].1.len()));

    let mut skipped = 0;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let (mut max_src, mut max_tgt) = (0, 0);
    for i in order {
        let (s, t) = (corpus.pairs[i].0.len(), corpus.pairs[i].1.len());
        if pair_cost(s, t) > max_tokens {
            skipped += 1;
            continue;
        }
        let (ns, nt) = (max_src.max(s), max_tgt.max(t));
        if !current.is_empty() && (current.len() + 1) * pair_cost(ns, nt) > max_tokens {
            groups.push(std::mem::take(&mut current));
            max_src = s;
            max_tgt = t;
        } else {
            max_src = ns;
            max_tgt = nt;
        }
        current.push(i);
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups.shuffle(&mut rng);
    if skipped > 0 {
        log::warn!("skipped {skipped} sentence pairs longer than the {max_tokens}-token budget");
    }
    Batches {
        batches: groups.iter().map(|g| Batch::from_corpus(corpus, g)).collect(),
        skipped,
    }
}
