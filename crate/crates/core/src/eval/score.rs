use crate::autograd::Tape;
use crate::data::{batch_iterator, Batch, EncodedCorpus, PAD};
use crate::error::{Error, Result};
use crate::model::{Model, Pass};
use crate::scalar::Scalar;

/// Teacher-forced loss and accuracy over a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherForced {
    /// Mean cross entropy per non-pad target token.
    pub loss: f64,
    /// Fraction of non-pad target positions (including `</s>`) whose argmax
    /// is the reference token.
    pub accuracy: f64,
    pub tokens: usize,
}

/// Loss summed over valid tokens, and the number of correct argmaxes.
pub fn score_batch<T: Scalar>(model: &Model<T>, batch: &Batch) -> Result<(f64, usize)> {
    let tape = Tape::inference();
    let p = model.params().bind(&tape);
    let logits = model.forward_with(&p, batch, &mut Pass::eval())?;
    let vocab = model.config().tgt_vocab;
    let rows = batch.size() * batch.tgt_out.width;
    let (_, per) = logits
        .reshape(&[rows, vocab])?
        .cross_entropy(&batch.tgt_out.ids, PAD, T::zero())?;
    let loss: f64 = per.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).sum();
    let values = logits.value();
    let correct = batch
        .tgt_out
        .ids
        .iter()
        .enumerate()
        .filter(|&(r, &t)| {
            t != PAD && crate::attention::gaussian::argmax(&values.data()[r * vocab..(r + 1) * vocab]) == Some(t)
        })
        .count();
    Ok((loss, correct))
}

pub fn teacher_forced<T: Scalar>(model: &Model<T>, corpus: &EncodedCorpus, max_tokens: usize) -> Result<TeacherForced> {
    let batches = batch_iterator(corpus, max_tokens, 0);
    let (mut loss, mut correct, mut tokens) = (0.0, 0, 0);
    for b in &batches.batches {
        let (l, c) = score_batch(model, b)?;
        loss += l;
        correct += c;
        tokens += b.target_tokens();
    }
    if tokens == 0 {
        return Err(Error::EmptyLoss);
    }
    Ok(TeacherForced {
        loss: loss / tokens as f64,
        accuracy: correct as f64 / tokens as f64,
        tokens,
    })
}
