use crate::attention::gaussian::argmax;
use crate::autograd::Tape;
use crate::data::{Batch, Padded, BOS, EOS, PAD};
use crate::error::Result;
use crate::model::{Model, Pass};
use crate::scalar::Scalar;

/// Greedy decoding of every source row in `batch` (targets are ignored).
///
/// Each step feeds the whole prefix and takes the argmax of the last
/// position, lowest id on ties, never `<pad>` or `<s>`. Rows stop at `</s>` (not included in the
/// output) or after `max_len` tokens.
pub fn greedy_decode<T: Scalar>(model: &Model<T>, batch: &Batch, max_len: usize) -> Result<Vec<Vec<usize>>> {
    greedy_decode_src(model, &batch.src, max_len)
}

/// Greedy decoding of `src` rows that already end with `</s>`.
pub fn greedy_decode_src<T: Scalar>(model: &Model<T>, src: &Padded, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let rows = src.rows();
    let vocab = model.config().tgt_vocab;
    let memory = {
        let tape = Tape::inference();
        let p = model.params().bind(&tape);
        model.encode_with(&p, src, &mut Pass::eval())?.value()
    };
    let mut prefixes: Vec<Vec<usize>> = vec![vec![BOS]; rows];
    let mut done = vec![false; rows];
    for _ in 0..max_len {
        if done.iter().all(|&d| d) {
            break;
        }
        let tape = Tape::inference();
        let p = model.params().bind(&tape);
        let mem = tape.leaf_rc(memory.clone(), false);
        let tgt_in = Padded::new(&prefixes, 0);
        let logits = model.decode_with(&p, &mem, &src.lens, &tgt_in, &mut Pass::eval())?.value();
        let width = tgt_in.width;
        for (r, prefix) in prefixes.iter_mut().enumerate() {
            if done[r] {
                // keep rows aligned; finished rows are never read again
                prefix.push(PAD);
                continue;
            }
            let at = (r * width + width - 1) * vocab;
            let next = best_token(&logits.data()[at..at + vocab]);
            prefix.push(next);
            done[r] = next == EOS;
        }
    }
    Ok(prefixes
        .into_iter()
        .map(|p| p.into_iter().skip(1).take_while(|&t| t != EOS).collect())
        .collect())
}

/// Argmax over real output tokens: `<pad>` and `<s>` are never emitted.
fn best_token<T: Scalar>(logits: &[T]) -> usize {
    let skip = BOS + 1;
    argmax(&logits[skip..]).map_or(EOS, |i| i + skip)
}

/// Translate id sequences (without `</s>`) in chunks of `batch_size`.
pub fn translate<T: Scalar>(
    model: &Model<T>,
    sources: &[Vec<usize>],
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(batch_size.max(1)) {
        let rows: Vec<Vec<usize>> = chunk
            .iter()
            .map(|s| s.iter().copied().chain(std::iter::once(EOS)).collect())
            .collect();
        out.extend(greedy_decode_src(model, &Padded::new(&rows, 0), max_len)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, ModelConfig, Preset};
    use crate::tensor::Tensor;

    fn model() -> Model<f64> {
        let cfg = ModelConfig::preset(Preset::HC_SA, Dims::new(8, 12, 2, 1)).with_vocab(9, 7);
        Model::new(cfg, 0).unwrap()
    }

    /// Output layer that ignores its input and always prefers `bias`.
    fn forced(bias: &[f64]) -> Model<f64> {
        let mut m = model();
        m.params_mut().set("out.weight", Tensor::zeros(&[8, 7])).unwrap();
        m.params_mut().set("out.bias", Tensor::from_f64(&[7], bias).unwrap()).unwrap();
        m
    }

    #[test]
    fn eos_first_gives_empty_translation() {
        let m = forced(&[0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(translate(&m, &[vec![4, 5]], 10, 8).unwrap(), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn ties_pick_lowest_id_and_max_len_stops() {
        let m = forced(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let out = translate(&m, &[vec![4], vec![5, 6, 7]], 3, 8).unwrap();
        assert_eq!(out, vec![vec![4, 4, 4], vec![4, 4, 4]]);
    }

    #[test]
    fn batching_does_not_change_output() {
        let m = model();
        let srcs = vec![vec![4, 5, 6], vec![7], vec![8, 4]];
        let a = translate(&m, &srcs, 6, 1).unwrap();
        let b = translate(&m, &srcs, 6, 3).unwrap();
        assert_eq!(a, b);
    }
}
