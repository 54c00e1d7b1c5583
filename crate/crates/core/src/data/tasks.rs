//! Synthetic sequence-to-sequence tasks standing in for translation data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::ParallelCorpus;
use crate::data::vocab::RESERVED;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Copy,
    Reverse,
    /// Every source token repeated `k` times.
    Expand { k: usize },
    /// Token-wise substitution by a permutation drawn from `permutation_seed`.
    VocabMap { permutation_seed: u64 },
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "vocab-map" | "vocabmap" => Ok(TaskKind::VocabMap { permutation_seed: 0 }),
            _ => match lower.strip_prefix("expand") {
                Some(rest) => {
                    let k = rest.trim_start_matches([':', '-', '=']);
                    let k = if k.is_empty() { 2 } else { k.parse().map_err(|_| Error::config(format!("bad expand factor in `{s}`")))? };
                    Ok(TaskKind::Expand { k })
                }
                None => Err(Error::config(format!("unknown task `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Total vocabulary size including the four reserved tokens.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub samples: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, vocab_size: usize, max_len: usize, samples: usize, seed: u64) -> Self {
        TaskSpec {
            kind,
            vocab_size,
            min_len: 1,
            max_len,
            samples,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TaskSpec { seed, ..self.clone() }
    }

    pub fn with_samples(&self, samples: usize) -> Self {
        TaskSpec {
            samples,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size <= RESERVED.len() {
            return Err(Error::config(format!(
                "vocab_size {} leaves no room beyond the {} reserved tokens",
                self.vocab_size,
                RESERVED.len()
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if let TaskKind::Expand { k: 0 } = self.kind {
            return Err(Error::config("expansion factor must be at least 1"));
        }
        Ok(())
    }
}

/// Name of content symbol `k`.
pub fn symbol(k: usize) -> String {
    format!("w{k}")
}

/// Deterministic corpus for `spec`.
pub fn generate_task(spec: &TaskSpec) -> Result<ParallelCorpus> {
    spec.validate()?;
    let symbols = spec.vocab_size - RESERVED.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let permutation: Vec<usize> = match spec.kind {
        TaskKind::VocabMap { permutation_seed } => {
            let mut p: Vec<usize> = (0..symbols).collect();
            p.shuffle(&mut ChaCha8Rng::seed_from_u64(permutation_seed));
            p
        }
        _ => Vec::new(),
    };
    let mut pairs = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..symbols)).collect();
        let tgt: Vec<usize> = match spec.kind {
            TaskKind::Copy => src.clone(),
            TaskKind::Reverse => src.iter().rev().copied().collect(),
            TaskKind::Expand { k } => src.iter().flat_map(|&s| std::iter::repeat_n(s, k)).collect(),
            TaskKind::VocabMap { .. } => src.iter().map(|&s| permutation[s]).collect(),
        };
        pairs.push((
            src.into_iter().map(symbol).collect(),
            tgt.into_iter().map(symbol).collect(),
        ));
    }
    ParallelCorpus::new(pairs, format!("{:?} seed={}", spec.kind, spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::length_ratio;

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec::new(kind, 20, 6, 50, 7)
    }

    #[test]
    fn copy_and_reverse() {
        let c = generate_task(&spec(TaskKind::Copy)).unwrap();
        assert!(c.pairs.iter().all(|(s, t)| s == t));
        let r = generate_task(&spec(TaskKind::Reverse)).unwrap();
        for ((s, t), (cs, _)) in r.pairs.iter().zip(&c.pairs) {
            let mut rev = s.clone();
            rev.reverse();
            assert_eq!(&rev, t);
            // same seed, same sources
            assert_eq!(s, cs);
        }
    }

    #[test]
    fn expand_doubles_tokens() {
        let c = generate_task(&spec(TaskKind::Expand { k: 2 })).unwrap();
        for (s, t) in &c.pairs {
            let want: Vec<String> = s.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
            assert_eq!(&want, t);
        }
        assert_eq!(length_ratio(&c.pairs).unwrap(), 0.5);
    }

    #[test]
    fn vocab_map_is_a_bijection() {
        let c = generate_task(&spec(TaskKind::VocabMap { permutation_seed: 3 })).unwrap();
        let mut map = std::collections::HashMap::new();
        for (s, t) in &c.pairs {
            for (a, b) in s.iter().zip(t) {
                assert_eq!(map.entry(a.clone()).or_insert(b.clone()), b);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_task(&spec(TaskKind::Copy)).unwrap();
        let b = generate_task(&spec(TaskKind::Copy)).unwrap();
        assert_eq!(a, b);
        let c = generate_task(&spec(TaskKind::Copy).with_seed(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(generate_task(&TaskSpec::new(TaskKind::Copy, 4, 5, 10, 0)).is_err());
        let mut s = spec(TaskKind::Copy);
        s.min_len = 0;
        assert!(generate_task(&s).is_err());
        s.min_len = 7;
        assert!(generate_task(&s).is_err());
    }

    #[test]
    fn parse_task_names() {
        assert_eq!("copy".parse::<TaskKind>().unwrap(), TaskKind::Copy);
        assert_eq!("expand".parse::<TaskKind>().unwrap(), TaskKind::Expand { k: 2 });
        assert_eq!("expand:3".parse::<TaskKind>().unwrap(), TaskKind::Expand { k: 3 });
        assert!("nope".parse::<TaskKind>().is_err());
    }
}
