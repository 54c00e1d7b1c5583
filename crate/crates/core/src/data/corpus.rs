use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::vocab::Vocab;
use crate::error::{Error, Result};

/// Aligned source/target sentences, whitespace-tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
    /// File names or task description and seed.
    pub provenance: String,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(Vec<String>, Vec<String>)>, provenance: impl Into<String>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|(s, t)| s.is_empty() || t.is_empty()) {
            return Err(Error::Parse {
                line: i + 1,
                reason: "empty sentence".into(),
            });
        }
        Ok(ParallelCorpus {
            pairs,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Vec<String>> {
        self.pairs.iter().map(|(s, _)| s)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Vec<String>> {
        self.pairs.iter().map(|(_, t)| t)
    }

    pub fn encode(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> EncodedCorpus {
        EncodedCorpus {
            pairs: self
                .pairs
                .iter()
                .map(|(s, t)| (src_vocab.encode(s), tgt_vocab.encode(t)))
                .collect(),
        }
    }

    /// Write one sentence per line to the two files.
    pub fn save(&self, src_path: &Path, tgt_path: &Path) -> Result<()> {
        let join = |side: &mut dyn Iterator<Item = &Vec<String>>| {
            side.map(|s| s.join(" ") + "\n").collect::<String>()
        };
        fs::write(src_path, join(&mut self.sources()))?;
        fs::write(tgt_path, join(&mut self.targets()))?;
        Ok(())
    }
}

/// Corpus mapped to token ids (no BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodedCorpus {
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Mean source length over mean target length (raw token counts, no
/// BOS/EOS).
pub fn length_ratio<S: AsRef<[A]>, U: AsRef<[B]>, A, B>(pairs: &[(S, U)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let src: usize = pairs.iter().map(|(s, _)| s.as_ref().len()).sum();
    let tgt: usize = pairs.iter().map(|(_, t)| t.as_ref().len()).sum();
    if tgt == 0 {
        return Err(Error::EmptyCorpus);
    }
    // equal pair counts cancel in the ratio of means
    Ok(src as f64 / tgt as f64)
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

/// Where the vocabularies of an ingested corpus come from.
#[derive(Debug, Clone)]
pub enum VocabSource {
    /// Build from this corpus, keeping tokens seen at least `min_freq` times.
    Build { min_freq: usize },
    Provided { src: Vocab, tgt: Vocab },
}

/// Read line-aligned parallel text files.
pub fn ingest_parallel(
    src_path: &Path,
    tgt_path: &Path,
    vocab: VocabSource,
) -> Result<(ParallelCorpus, Vocab, Vocab)> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::Alignment {
            src_lines: src.len(),
            tgt_lines: tgt.len(),
        });
    }
    let corpus = ParallelCorpus::new(
        src.into_iter().zip(tgt).collect(),
        format!("{} | {}", src_path.display(), tgt_path.display()),
    )?;
    let (sv, tv) = match vocab {
        VocabSource::Build { min_freq } => (
            Vocab::build(corpus.sources(), min_freq),
            Vocab::build(corpus.targets(), min_freq),
        ),
        VocabSource::Provided { src, tgt } => (src, tgt),
    };
    Ok((corpus, sv, tv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::UNK;

    #[test]
    fn ratio_examples() {
        let pairs = vec![(vec![0; 4], vec![0; 5]), (vec![0; 6], vec![0; 5])];
        assert_eq!(length_ratio(&pairs).unwrap(), 1.0);
        let pairs: Vec<(Vec<u8>, Vec<u8>)> = vec![];
        assert!(matches!(length_ratio(&pairs), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn table_lengths_ratio() {
        // ten pairs with mean lengths 28.5 and 29.6
        let pairs: Vec<(Vec<u8>, Vec<u8>)> = (0..10)
            .map(|i| (vec![0; if i < 5 { 28 } else { 29 }], vec![0; if i < 6 { 30 } else { 29 }]))
            .collect();
        assert!((length_ratio(&pairs).unwrap() - 0.9628).abs() < 1e-4);
    }

    #[test]
    fn ingest_matched_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("a.src");
        let t = dir.path().join("a.tgt");
        fs::write(&s, "a b\nc\n").unwrap();
        fs::write(&t, "x\ny z\n").unwrap();
        let (c, sv, _) = ingest_parallel(&s, &t, VocabSource::Build { min_freq: 1 }).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(sv.len(), 4 + 3);

        fs::write(&t, "x\ny z\nw\n").unwrap();
        let err = ingest_parallel(&s, &t, VocabSource::Build { min_freq: 1 }).unwrap_err();
        assert!(matches!(err, Error::Alignment { src_lines: 2, tgt_lines: 3 }));
    }

    #[test]
    fn provided_vocab_maps_oov_to_unk() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("a.src");
        let t = dir.path().join("a.tgt");
        fs::write(&s, "a q\n").unwrap();
        fs::write(&t, "x\n").unwrap();
        let v = Vocab::from_tokens(["a", "x"]);
        let (c, sv, tv) = ingest_parallel(
            &s,
            &t,
            VocabSource::Provided {
                src: v.clone(),
                tgt: v,
            },
        )
        .unwrap();
        let enc = c.encode(&sv, &tv);
        assert_eq!(enc.pairs[0].0, vec![4, UNK]);
    }
}
