use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    causal_kernel, hard_cross_weights, hard_self_weights, scaled_dot_attention, AttentionSpec, CrossGeometry,
    GammaSource, Site,
};
use crate::autograd::Var;
use crate::data::{Batch, Padded, PAD};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::{embedding_init, sinusoidal_positions, xavier_uniform, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Attention weights of one head for one sentence, trimmed to the valid
/// query and key positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub site: Site,
    pub layer: usize,
    pub head: usize,
    /// Corpus index of the sentence.
    pub sentence: usize,
    /// Whether the weights came from learned query/key projections.
    pub learned: bool,
    pub rows: Vec<Vec<f64>>,
}

/// Per-call forward state: dropout randomness and weight capture.
#[derive(Default)]
pub struct Pass<'r> {
    /// Dropout is active only when a generator is supplied.
    pub rng: Option<&'r mut ChaCha8Rng>,
    pub capture: bool,
    /// Corpus index of each batch row, used to label captured records.
    pub sentence_ids: Vec<usize>,
    pub records: Vec<AttentionRecord>,
}

impl<'r> Pass<'r> {
    /// Deterministic, nothing captured.
    pub fn eval() -> Self {
        Pass::default()
    }

    pub fn train(rng: &'r mut ChaCha8Rng) -> Self {
        Pass {
            rng: Some(rng),
            ..Pass::default()
        }
    }

    pub fn capturing(sentence_ids: Vec<usize>) -> Self {
        Pass {
            capture: true,
            sentence_ids,
            ..Pass::default()
        }
    }

    fn sentence(&self, row: usize) -> usize {
        self.sentence_ids.get(row).copied().unwrap_or(row)
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    fn apply<'t, T: Scalar>(&self, p: &[Var<'t, T>], x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(&p[self.w])?.add(&p[self.b])
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
enum Projections {
    Learned {
        q: Linear,
        k: Linear,
        v: Linear,
        o: Linear,
        heads: usize,
    },
    /// Fixed weights still mix projected values.
    Values { v: Linear, o: Linear },
}

#[derive(Debug, Clone)]
struct Sublayer {
    site: Site,
    layer: usize,
    spec: AttentionSpec,
    proj: Projections,
    norm: Norm,
}

#[derive(Debug, Clone)]
struct FeedForward {
    fc1: Linear,
    fc2: Linear,
    norm: Norm,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn: Option<Sublayer>,
    ff: Option<FeedForward>,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    attn: Option<Sublayer>,
    cross: Option<Sublayer>,
    ff: Option<FeedForward>,
}

/// Encoder-decoder Transformer with per-site attention strategies.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    src_embed: usize,
    tgt_embed: usize,
    out: Linear,
    enc: Vec<EncoderLayer>,
    dec: Vec<DecoderLayer>,
}

struct Builder<'a, T: Scalar> {
    store: ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn linear(&mut self, name: &str, n_in: usize, n_out: usize) -> Linear {
        let w = self.store.add(format!("{name}.weight"), xavier_uniform(n_in, n_out, self.rng));
        let b = self.store.add(format!("{name}.bias"), Tensor::zeros(&[n_out]));
        Linear { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        let gain = self.store.add(format!("{name}.gain"), Tensor::full(&[d], T::one()));
        let bias = self.store.add(format!("{name}.bias"), Tensor::zeros(&[d]));
        Norm { gain, bias }
    }

    fn attention(&mut self, cfg: &ModelConfig, site: Site, layer: usize, spec: &AttentionSpec) -> Option<Sublayer> {
        let d = cfg.d_model;
        let prefix = match site {
            Site::EncSelf => format!("enc.{layer}.self"),
            Site::DecSelf => format!("dec.{layer}.self"),
            Site::Cross => format!("dec.{layer}.cross"),
        };
        let learned = |b: &mut Self, heads: usize, head_dim: usize| {
            let inner = heads * head_dim;
            Projections::Learned {
                q: b.linear(&format!("{prefix}.q"), d, inner),
                k: b.linear(&format!("{prefix}.k"), d, inner),
                v: b.linear(&format!("{prefix}.v"), d, inner),
                o: b.linear(&format!("{prefix}.o"), inner, d),
                heads,
            }
        };
        let proj = match spec {
            AttentionSpec::NoAttention => return None,
            AttentionSpec::LearnedMha { num_heads } => learned(self, *num_heads, cfg.head_dim()),
            AttentionSpec::SingleLearnedHead { head_dim } => learned(self, 1, *head_dim),
            _ => Projections::Values {
                v: self.linear(&format!("{prefix}.v"), d, d),
                o: self.linear(&format!("{prefix}.o"), d, d),
            },
        };
        Some(Sublayer {
            site,
            layer,
            spec: spec.clone(),
            proj,
            norm: self.norm(&format!("{prefix}.norm"), d),
        })
    }

    fn feed_forward(&mut self, cfg: &ModelConfig, prefix: &str) -> Option<FeedForward> {
        cfg.use_ff.then(|| FeedForward {
            fc1: self.linear(&format!("{prefix}.ff.fc1"), cfg.d_model, cfg.d_ff),
            fc2: self.linear(&format!("{prefix}.ff.fc2"), cfg.d_ff, cfg.d_model),
            norm: self.norm(&format!("{prefix}.ff.norm"), cfg.d_model),
        })
    }
}

fn split_heads<'t, T: Scalar>(x: Var<'t, T>, b: usize, t: usize, heads: usize) -> Result<Var<'t, T>> {
    let width = x.shape()[2];
    x.reshape(&[b, t, heads, width / heads])?.permute(&[0, 2, 1, 3])
}

fn merge_heads<'t, T: Scalar>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    let s = x.shape();
    x.permute(&[0, 2, 1, 3])?.reshape(&[s[0], s[2], s[1] * s[3]])
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized model; the same seed gives identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.src_vocab == 0 || config.tgt_vocab == 0 {
            return Err(Error::config("vocabulary sizes must be set before building a model"));
        }
        if config.needs_corpus_gamma() && config.gamma.is_none() {
            return Err(Error::config(
                "hard-coded cross attention needs the corpus length ratio (gamma)",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let d = config.d_model;
        let src_embed = b.store.add("src_embed", embedding_init(config.src_vocab, d, b.rng));
        let tgt_embed = b.store.add("tgt_embed", embedding_init(config.tgt_vocab, d, b.rng));
        let enc = (0..config.enc_layers)
            .map(|l| EncoderLayer {
                attn: b.attention(&config, Site::EncSelf, l, &config.enc_self[l]),
                ff: b.feed_forward(&config, &format!("enc.{l}")),
            })
            .collect();
        let dec = (0..config.dec_layers)
            .map(|l| DecoderLayer {
                attn: b.attention(&config, Site::DecSelf, l, &config.dec_self[l]),
                cross: b.attention(&config, Site::Cross, l, &config.cross[l]),
                ff: b.feed_forward(&config, &format!("dec.{l}")),
            })
            .collect();
        let out = b.linear("out", d, config.tgt_vocab);
        Ok(Model {
            params: b.store,
            config,
            src_embed,
            tgt_embed,
            out,
            enc,
            dec,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// The same model in another float type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut params = ParamStore::new();
        for (name, t) in self.params.iter() {
            params.add(name, t.cast::<U>());
        }
        Model {
            config: self.config.clone(),
            params,
            src_embed: self.src_embed,
            tgt_embed: self.tgt_embed,
            out: self.out,
            enc: self.enc.clone(),
            dec: self.dec.clone(),
        }
    }

    /// Teacher-forced logits `[batch, tgt_width, tgt_vocab]`.
    pub fn forward_with<'t>(&self, p: &[Var<'t, T>], batch: &Batch, pass: &mut Pass<'_>) -> Result<Var<'t, T>> {
        let memory = self.encode_with(p, &batch.src, pass)?;
        self.decode_with(p, &memory, &batch.src.lens, &batch.tgt_in, pass)
    }

    /// Mean token cross entropy over non-pad targets, plus per-position
    /// losses `[batch * tgt_width]` (zero at padding).
    pub fn loss_with<'t>(
        &self,
        p: &[Var<'t, T>],
        batch: &Batch,
        smoothing: f64,
        pass: &mut Pass<'_>,
    ) -> Result<(Var<'t, T>, Vec<T>)> {
        let logits = self.forward_with(p, batch, pass)?;
        let rows = batch.size() * batch.tgt_out.width;
        logits
            .reshape(&[rows, self.config.tgt_vocab])?
            .cross_entropy(&batch.tgt_out.ids, PAD, T::of(smoothing))
    }

    /// Encoder states `[batch, src_width, d_model]`.
    pub fn encode_with<'t>(&self, p: &[Var<'t, T>], src: &Padded, pass: &mut Pass<'_>) -> Result<Var<'t, T>> {
        if src.lens.contains(&0) {
            return Err(Error::EmptySource);
        }
        let mut x = self.embed(p, self.src_embed, src, pass)?;
        for layer in &self.enc {
            if let Some(sub) = &layer.attn {
                let y = self.attend(sub, p, &x, &x, &src.lens, &src.lens, pass)?;
                x = self.residual(p, &x, y, sub.norm, pass)?;
            }
            if let Some(ff) = &layer.ff {
                x = self.feed_forward(p, &x, ff, pass)?;
            }
        }
        Ok(x)
    }

    /// Decoder logits `[batch, tgt_width, tgt_vocab]` given encoder states.
    pub fn decode_with<'t>(
        &self,
        p: &[Var<'t, T>],
        memory: &Var<'t, T>,
        src_lens: &[usize],
        tgt_in: &Padded,
        pass: &mut Pass<'_>,
    ) -> Result<Var<'t, T>> {
        let mut x = self.embed(p, self.tgt_embed, tgt_in, pass)?;
        for layer in &self.dec {
            if let Some(sub) = &layer.attn {
                let y = self.attend(sub, p, &x, &x, &tgt_in.lens, &tgt_in.lens, pass)?;
                x = self.residual(p, &x, y, sub.norm, pass)?;
            }
            if let Some(sub) = &layer.cross {
                let y = self.attend(sub, p, &x, memory, &tgt_in.lens, src_lens, pass)?;
                x = self.residual(p, &x, y, sub.norm, pass)?;
            }
            if let Some(ff) = &layer.ff {
                x = self.feed_forward(p, &x, ff, pass)?;
            }
        }
        self.out.apply(p, &x)
    }

    fn embed<'t>(&self, p: &[Var<'t, T>], table: usize, seqs: &Padded, pass: &mut Pass<'_>) -> Result<Var<'t, T>> {
        let d = self.config.d_model;
        if let Some(&len) = seqs.lens.iter().find(|&&l| l > self.config.max_len) {
            return Err(Error::Length {
                len,
                max: self.config.max_len,
            });
        }
        let tape = p[table].tape();
        let x = p[table]
            .embedding(&seqs.ids)?
            .scale(T::of((d as f64).sqrt()))
            .reshape(&[seqs.rows(), seqs.width, d])?;
        let x = x.add(&tape.constant(sinusoidal_positions(seqs.width, d)))?;
        Ok(self.dropout(x, pass))
    }

    fn dropout<'t>(&self, x: Var<'t, T>, pass: &mut Pass<'_>) -> Var<'t, T> {
        match pass.rng.as_deref_mut() {
            Some(rng) if self.config.dropout > 0.0 => x.dropout(self.config.dropout, rng),
            _ => x,
        }
    }

    fn residual<'t>(
        &self,
        p: &[Var<'t, T>],
        x: &Var<'t, T>,
        y: Var<'t, T>,
        norm: Norm,
        pass: &mut Pass<'_>,
    ) -> Result<Var<'t, T>> {
        let y = self.dropout(y, pass);
        x.add(&y)?
            .layer_norm(&p[norm.gain], &p[norm.bias], T::of(self.config.ln_eps))
    }

    fn feed_forward<'t>(
        &self,
        p: &[Var<'t, T>],
        x: &Var<'t, T>,
        ff: &FeedForward,
        pass: &mut Pass<'_>,
    ) -> Result<Var<'t, T>> {
        let h = ff.fc1.apply(p, x)?.relu();
        let y = ff.fc2.apply(p, &h)?;
        self.residual(p, x, y, ff.norm, pass)
    }

    fn gamma(&self, source: GammaSource) -> Result<f64> {
        match source {
            GammaSource::Fixed(g) => Ok(g),
            GammaSource::FromCorpus => self
                .config
                .gamma
                .ok_or_else(|| Error::config("corpus length ratio is not resolved")),
        }
    }

    /// Fixed attention weights `[batch, heads, tq, tk]` of a hard-coded site.
    /// Rows with equal key lengths share one computation.
    fn hard_weights(&self, sub: &Sublayer, tq: usize, tk: usize, k_lens: &[usize]) -> Result<Tensor<T>> {
        let mut cache: Vec<(usize, Tensor<T>)> = Vec::new();
        let mut data = Vec::new();
        let mut heads = 0;
        for &len in k_lens {
            if !cache.iter().any(|(l, _)| *l == len) {
                cache.push((len, self.hard_weights_one(sub, tq, tk, len)?));
            }
            let w = &cache.iter().find(|(l, _)| *l == len).expect("cached").1;
            heads = w.shape()[0];
            data.extend_from_slice(w.data());
        }
        Tensor::new(&[k_lens.len(), heads, tq, tk], data)
    }

    fn hard_weights_one(&self, sub: &Sublayer, tq: usize, tk: usize, len: usize) -> Result<Tensor<T>> {
        let mask: Vec<bool> = (0..tk).map(|j| j < len).collect();
        match &sub.spec {
            AttentionSpec::HardGaussian {
                offsets,
                sigma,
                truncation,
            } => hard_self_weights(tk, offsets, *sigma, *truncation, sub.site.is_causal(), Some(&mask)),
            AttentionSpec::HardGaussianCross {
                offsets,
                sigma,
                gamma_source,
                center_mode,
                index_base,
            } => {
                let geometry = CrossGeometry {
                    offsets,
                    sigma: *sigma,
                    gamma: self.gamma(*gamma_source)?,
                    center_mode: *center_mode,
                    index_base: *index_base,
                };
                hard_cross_weights(&geometry, tq, tk, Some(&mask))
            }
            other => unreachable!("{} has no weight matrix", other.label()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attend<'t>(
        &self,
        sub: &Sublayer,
        p: &[Var<'t, T>],
        x: &Var<'t, T>,
        mem: &Var<'t, T>,
        q_lens: &[usize],
        k_lens: &[usize],
        pass: &mut Pass<'_>,
    ) -> Result<Var<'t, T>> {
        let (b, tq, tk) = (x.shape()[0], x.shape()[1], mem.shape()[1]);
        let causal = sub.site.is_causal();
        let tape = x.tape();
        match &sub.proj {
            Projections::Learned {
                q,
                k,
                v,
                o,
                heads,
            } => {
                let qh = split_heads(q.apply(p, x)?, b, tq, *heads)?;
                let kh = split_heads(k.apply(p, mem)?, b, tk, *heads)?;
                let vh = split_heads(v.apply(p, mem)?, b, tk, *heads)?;
                let mut mask = Vec::with_capacity(b * heads * tq * tk);
                for &len in k_lens {
                    for _ in 0..*heads {
                        for i in 0..tq {
                            mask.extend((0..tk).map(|j| j < len && !(causal && j > i)));
                        }
                    }
                }
                let (out, weights) = scaled_dot_attention(&qh, &kh, &vh, &mask)?;
                if pass.capture {
                    self.record(sub, &weights.value(), q_lens, k_lens, true, pass);
                }
                o.apply(p, &merge_heads(out)?)
            }
            Projections::Values { v, o } => {
                let values = v.apply(p, mem)?;
                let mixed = match &sub.spec {
                    AttentionSpec::FixedConv { kernel, causal: c } => {
                        let kernel = if *c || causal {
                            causal_kernel(kernel)
                        } else {
                            kernel.clone()
                        };
                        if pass.capture {
                            let w = band_weights::<T>(&kernel, 0, tk, k_lens);
                            self.record(sub, &w, q_lens, k_lens, false, pass);
                        }
                        let kernel: Vec<T> = kernel.into_iter().map(T::of).collect();
                        values.conv_seq(&kernel, k_lens)?
                    }
                    AttentionSpec::IndexSelect { offset } => {
                        if pass.capture {
                            let w = band_weights::<T>(&[1.0], *offset, tk, k_lens);
                            self.record(sub, &w, q_lens, k_lens, false, pass);
                        }
                        values.shift_seq(*offset as isize, k_lens)?
                    }
                    _ => {
                        let w = self.hard_weights(sub, tq, tk, k_lens)?;
                        if pass.capture {
                            self.record(sub, &w, q_lens, k_lens, false, pass);
                        }
                        let heads = w.shape()[1];
                        let vh = split_heads(values, b, tk, heads)?;
                        merge_heads(tape.constant(w).matmul(&vh)?)?
                    }
                };
                o.apply(p, &mixed)
            }
        }
    }

    fn record(
        &self,
        sub: &Sublayer,
        weights: &Tensor<T>,
        q_lens: &[usize],
        k_lens: &[usize],
        learned: bool,
        pass: &mut Pass<'_>,
    ) {
        let s = weights.shape();
        let (heads, tq, tk) = (s[1], s[2], s[3]);
        let data = weights.data();
        for (row, (&ql, &kl)) in q_lens.iter().zip(k_lens).enumerate() {
            for h in 0..heads {
                let base = (row * heads + h) * tq * tk;
                let rows = (0..ql)
                    .map(|i| {
                        data[base + i * tk..base + i * tk + kl]
                            .iter()
                            .map(|x| x.to_f64().unwrap_or(f64::NAN))
                            .collect()
                    })
                    .collect();
                pass.records.push(AttentionRecord {
                    site: sub.site,
                    layer: sub.layer,
                    head: h,
                    sentence: pass.sentence(row),
                    learned,
                    rows,
                });
            }
        }
    }
}

/// Equivalent weight matrices `[batch, 1, n, n]` of a convolution (or a
/// single-tap shift when `kernel = [1]` and `offset != 0`).
fn band_weights<T: Scalar>(kernel: &[f64], offset: i64, n: usize, lens: &[usize]) -> Tensor<T> {
    let r = (kernel.len() / 2) as i64;
    let mut data = vec![T::zero(); lens.len() * n * n];
    for (b, &len) in lens.iter().enumerate() {
        for i in 0..n {
            for (t, &w) in kernel.iter().enumerate() {
                let j = i as i64 + t as i64 - r + offset;
                if (0..len as i64).contains(&j) {
                    data[(b * n + i) * n + j as usize] = T::of(w);
                }
            }
        }
    }
    Tensor::new(&[lens.len(), 1, n, n], data).expect("consistent shape")
}
