//! Decoding and evaluation metrics.

pub mod bleu;
pub mod contrastive;
pub mod decode;
pub mod score;

pub use bleu::{corpus_bleu, BleuStats};
pub use contrastive::{contrastive_accuracy, load_contrastive, sequence_loss, ContrastiveItem, ContrastiveReport};
pub use decode::{greedy_decode, greedy_decode_src, translate};
pub use score::{score_batch, teacher_forced, TeacherForced};
