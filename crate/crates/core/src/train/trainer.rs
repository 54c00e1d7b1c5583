use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::{batch_iterator, Batch, EncodedCorpus};
use crate::error::{Error, Result};
use crate::eval::{corpus_bleu, teacher_forced, translate};
use crate::model::{save_checkpoint, Model, Pass};
use crate::scalar::Scalar;
use crate::train::adam::{Adam, AdamConfig};
use crate::train::schedule::{schedule_lr, Schedule};

/// Offset mixed into the root seed for the dropout stream.
const DROPOUT_STREAM: u64 = 0x0d50_7a11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    /// Token budget per batch (both sides, padding included).
    pub max_tokens: usize,
    pub adam: AdamConfig,
    pub schedule: Schedule,
    pub seed: u64,
    /// Evaluate every this many steps; the last step is always evaluated.
    pub eval_interval: usize,
    pub label_smoothing: f64,
    /// Stop at the first evaluation whose dev token accuracy reaches this.
    pub target_accuracy: Option<f64>,
    /// Decode the dev set at each evaluation to report BLEU.
    pub dev_bleu: bool,
    pub decode_max_len: usize,
    /// Manifest path rewritten at every evaluation.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            max_tokens: 2048,
            adam: AdamConfig::default(),
            schedule: Schedule::Linear { peak: 3e-4 },
            seed: 1,
            eval_interval: 100,
            label_smoothing: 0.0,
            target_accuracy: None,
            dev_bleu: true,
            decode_max_len: 64,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config(format!("label smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: usize,
    /// Mean training loss since the previous evaluation.
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    /// NaN when BLEU was not computed.
    pub dev_bleu: f64,
    pub tokens_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "step,train_loss,dev_loss,dev_bleu,tokens_per_sec";

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.step, r.train_loss, r.dev_loss, r.dev_bleu, r.tokens_per_sec
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Dev-set BLEU of greedy translations.
pub fn dev_bleu<T: Scalar>(model: &Model<T>, dev: &EncodedCorpus, max_len: usize) -> Result<f64> {
    let sources: Vec<Vec<usize>> = dev.pairs.iter().map(|(s, _)| s.clone()).collect();
    let refs: Vec<Vec<usize>> = dev.pairs.iter().map(|(_, t)| t.clone()).collect();
    let hyps = translate(model, &sources, max_len, 64)?;
    corpus_bleu(&hyps, &refs)
}

/// One optimizer step on `batch`; returns the batch loss.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    batch: &Batch,
    lr: f64,
    smoothing: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let (loss, _) = model.loss_with(&p, batch, smoothing, &mut Pass::train(rng))?;
    let value = loss.value().item().to_f64().unwrap_or(f64::NAN);
    if !value.is_finite() {
        return Ok(value);
    }
    tape.backward(loss)?;
    let grads: Vec<_> = p.iter().map(|v| v.grad()).collect();
    drop(p);
    drop(tape);
    adam.step(model.params_mut(), &grads, lr);
    Ok(value)
}

/// Train with teacher forcing. Deterministic given the config seed, the
/// model and the corpora.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    cfg: &TrainConfig,
) -> Result<(Model<T>, MetricsLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut log = MetricsLog::default();
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let d_model = model.config().d_model;
    let mut epoch = 0u64;
    let mut queue = Vec::new().into_iter();
    let (mut loss_sum, mut loss_steps, mut tokens) = (0.0, 0usize, 0usize);
    let mut clock = Instant::now();
    let mut train_secs = 0.0;

    for step in 0..cfg.steps {
        let batch = loop {
            if let Some(b) = queue.next() {
                break b;
            }
            let batches = batch_iterator(train, cfg.max_tokens, cfg.seed.wrapping_add(epoch));
            if batches.batches.is_empty() {
                return Err(Error::BudgetTooSmall {
                    budget: cfg.max_tokens,
                    needed: train
                        .pairs
                        .iter()
                        .map(|(s, t)| crate::data::pair_cost(s.len(), t.len()))
                        .min()
                        .unwrap_or(0),
                });
            }
            epoch += 1;
            queue = batches.batches.into_iter();
        };
        let lr = schedule_lr(&cfg.schedule, step, cfg.steps, d_model);
        let loss = train_step(&mut model, &mut adam, &batch, lr, cfg.label_smoothing, &mut dropout_rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: step + 1, loss });
        }
        loss_sum += loss;
        loss_steps += 1;
        tokens += batch.target_tokens();

        let done = step + 1;
        if done == cfg.steps || (cfg.eval_interval > 0 && done % cfg.eval_interval == 0) {
            train_secs += clock.elapsed().as_secs_f64();
            let tf = teacher_forced(&model, dev, cfg.max_tokens.max(1))?;
            let bleu = if cfg.dev_bleu {
                dev_bleu(&model, dev, cfg.decode_max_len)?
            } else {
                f64::NAN
            };
            let record = MetricsRecord {
                step: done,
                train_loss: loss_sum / loss_steps as f64,
                dev_loss: tf.loss,
                dev_accuracy: tf.accuracy,
                dev_bleu: bleu,
                tokens_per_sec: tokens as f64 / train_secs.max(1e-9),
            };
            log::info!(
                "step {done}: train {:.4} dev {:.4} acc {:.4} bleu {:.2}",
                record.train_loss,
                record.dev_loss,
                record.dev_accuracy,
                record.dev_bleu
            );
            log.records.push(record);
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(&model, path)?;
            }
            (loss_sum, loss_steps, tokens, train_secs) = (0.0, 0, 0, 0.0);
            if cfg.target_accuracy.is_some_and(|a| tf.accuracy >= a) {
                break;
            }
            clock = Instant::now();
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_task, TaskKind, TaskSpec, Vocab};
    use crate::model::{Dims, ModelConfig, Preset};

    fn setup() -> (ModelConfig, EncodedCorpus, EncodedCorpus) {
        let spec = TaskSpec::new(TaskKind::Copy, 12, 5, 60, 1);
        let c = generate_task(&spec).unwrap();
        let v = Vocab::build(c.sources(), 1);
        let train = c.encode(&v, &v);
        let dev = generate_task(&spec.with_seed(2).with_samples(10)).unwrap().encode(&v, &v);
        let cfg = ModelConfig::preset(Preset::HC_SA, Dims::new(16, 24, 2, 1)).with_vocab(v.len(), v.len());
        (cfg, train, dev)
    }

    fn quick(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            max_tokens: 200,
            eval_interval: 5,
            schedule: Schedule::Linear { peak: 3e-3 },
            decode_max_len: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_leave_params_unchanged() {
        let (cfg, train_c, dev) = setup();
        let m = Model::<f64>::new(cfg, 0).unwrap();
        let (after, log) = train(m.clone(), &train_c, &dev, &quick(0)).unwrap();
        assert!(log.records.is_empty());
        assert!(m.params().iter().zip(after.params().iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn deterministic_and_loss_drops() {
        let (cfg, train_c, dev) = setup();
        let run = || train(Model::<f64>::new(cfg.clone(), 0).unwrap(), &train_c, &dev, &quick(20)).unwrap().1;
        let (a, b) = (run(), run());
        assert_eq!(a.records.len(), 4);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.dev_loss.to_bits(), y.dev_loss.to_bits());
            assert_eq!(x.dev_bleu.to_bits(), y.dev_bleu.to_bits());
        }
        assert!(a.records[3].dev_loss < a.records[0].dev_loss);
        assert!(a.to_csv().starts_with("step,train_loss,dev_loss,dev_bleu,tokens_per_sec\n5,"));
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (cfg, train_c, dev) = setup();
        let m = Model::<f64>::new(cfg, 0).unwrap();
        let tc = TrainConfig {
            schedule: Schedule::Linear { peak: 1e300 },
            ..quick(20)
        };
        assert!(matches!(train(m, &train_c, &dev, &tc), Err(Error::Divergence { .. })));
    }
}
