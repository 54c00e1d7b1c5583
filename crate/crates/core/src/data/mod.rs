//! Vocabularies, parallel corpora, synthetic tasks and token-budget batching.

pub mod batch;
pub mod corpus;
pub mod tasks;
pub mod vocab;

pub use batch::{batch_iterator, pair_cost, Batch, Batches, Padded};
pub use corpus::{ingest_parallel, length_ratio, EncodedCorpus, ParallelCorpus, VocabSource};
pub use tasks::{generate_task, TaskKind, TaskSpec};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};
