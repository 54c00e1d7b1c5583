use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::data::{Batch, Vocab};
use crate::error::{Error, Result};
use crate::eval::score::score_batch;
use crate::model::Model;
use crate::scalar::Scalar;

/// A source with a reference and a minimally different wrong target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveItem {
    pub category: String,
    pub src: Vec<usize>,
    pub reference: Vec<usize>,
    pub contrastive: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl CategoryScore {
    fn new(correct: usize, total: usize) -> Self {
        CategoryScore {
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveReport {
    pub overall: CategoryScore,
    pub per_category: BTreeMap<String, CategoryScore>,
}

/// Summed token cross entropy of `tgt` (plus `</s>`) given `src`.
pub fn sequence_loss<T: Scalar>(model: &Model<T>, src: &[usize], tgt: &[usize]) -> Result<f64> {
    let batch = Batch::from_pairs(&[(src, tgt)], vec![0]);
    Ok(score_batch(model, &batch)?.0)
}

/// Fraction of items whose reference has strictly lower summed loss than
/// its contrastive variant. Ties count as wrong. Every sequence is scored
/// on its own, so the result does not depend on how items are grouped.
pub fn contrastive_accuracy<T: Scalar>(model: &Model<T>, items: &[ContrastiveItem]) -> Result<ContrastiveReport> {
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for item in items {
        let good = sequence_loss(model, &item.src, &item.reference)?;
        let bad = sequence_loss(model, &item.src, &item.contrastive)?;
        let hit = good < bad;
        correct += hit as usize;
        let e = tally.entry(item.category.clone()).or_default();
        e.0 += hit as usize;
        e.1 += 1;
    }
    Ok(ContrastiveReport {
        overall: CategoryScore::new(correct, items.len()),
        per_category: tally.into_iter().map(|(k, (c, t))| (k, CategoryScore::new(c, t))).collect(),
    })
}

/// Parse `category<TAB>src<TAB>reference<TAB>contrastive` lines.
pub fn load_contrastive(path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<Vec<ContrastiveItem>> {
    let text = fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        let (src, reference, contrastive) = (toks(fields[1]), toks(fields[2]), toks(fields[3]));
        if src.is_empty() || reference.is_empty() || contrastive.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                reason: "empty sentence".into(),
            });
        }
        items.push(ContrastiveItem {
            category: fields[0].trim().to_string(),
            src: src_vocab.encode(&src),
            reference: tgt_vocab.encode(&reference),
            contrastive: tgt_vocab.encode(&contrastive),
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EOS;
    use crate::model::{Dims, ModelConfig, Preset};
    use crate::tensor::Tensor;

    /// Model whose output distribution is `softmax(bias)` at every position.
    fn fixed_output(bias: &[f64]) -> Model<f64> {
        let cfg = ModelConfig::preset(Preset::BASE, Dims::new(8, 12, 2, 1)).with_vocab(8, bias.len());
        let mut m = Model::new(cfg, 0).unwrap();
        m.params_mut().set("out.weight", Tensor::zeros(&[8, bias.len()])).unwrap();
        m.params_mut().set("out.bias", Tensor::from_f64(&[bias.len()], bias).unwrap()).unwrap();
        m
    }

    fn neg_log_softmax(bias: &[f64], t: usize) -> f64 {
        let z: f64 = bias.iter().map(|b| b.exp()).sum();
        z.ln() - bias[t]
    }

    fn item(cat: &str, r: Vec<usize>, c: Vec<usize>) -> ContrastiveItem {
        ContrastiveItem {
            category: cat.into(),
            src: vec![4, 5],
            reference: r,
            contrastive: c,
        }
    }

    #[test]
    fn two_pair_oracle() {
        let bias = [0.0, 0.0, 0.5, 0.0, 2.0, 1.0, -1.0];
        let m = fixed_output(&bias);
        let want = neg_log_softmax(&bias, 4) + neg_log_softmax(&bias, 5) + neg_log_softmax(&bias, EOS);
        assert!((sequence_loss(&m, &[4, 5], &[4, 5]).unwrap() - want).abs() < 1e-12);
        // 4 beats 6; 6 loses to 5
        let items = vec![item("a", vec![4, 5], vec![6, 5]), item("b", vec![6, 4], vec![5, 4])];
        let r = contrastive_accuracy(&m, &items).unwrap();
        assert_eq!(r.overall.accuracy, 0.5);
        assert_eq!(r.per_category["a"].accuracy, 1.0);
        assert_eq!(r.per_category["b"].accuracy, 0.0);
    }

    #[test]
    fn ties_are_wrong() {
        let m = fixed_output(&[0.0, 0.0, 0.5, 0.0, 2.0, 1.0, -1.0]);
        let r = contrastive_accuracy(&m, &[item("x", vec![4], vec![4])]).unwrap();
        assert_eq!(r.overall.correct, 0);
    }

    #[test]
    fn parses_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        fs::write(&p, "agr\ta b\tx y\tx z\n").unwrap();
        let sv = Vocab::from_tokens(["a", "b"]);
        let tv = Vocab::from_tokens(["x", "y", "z"]);
        let items = load_contrastive(&p, &sv, &tv).unwrap();
        assert_eq!(items[0].reference, vec![4, 5]);
        assert_eq!(items[0].contrastive, vec![4, 6]);
        fs::write(&p, "agr\ta b\tx y\n").unwrap();
        assert!(matches!(load_contrastive(&p, &sv, &tv), Err(Error::Parse { line: 1, .. })));
    }
}
