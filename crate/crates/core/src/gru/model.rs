//! Two-layer GRU caption model: teacher-forced forward pass, masked
//! cross-entropy, and backpropagation through time.
//!
//! Both layers start from the video code `upsilon`. Layer 1 reads word
//! embeddings; layer 2 reads layer 1's output; logits are an affine map of
//! layer 2's output. During training each layer's output passes through an
//! inverted-dropout mask before it is consumed; the recurrent state itself is
//! never masked.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::cell::{step, step_backward, StepCache};
use super::embedding::{char_ngrams, fnv1a64, EmbeddingTable};
use super::params::{GruLayerParams, ParamSet};
use crate::error::{Error, Result};
use crate::ingest::{Vocabulary, PAD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub state_size: usize,
    pub embed_dim: usize,
    pub ngram_buckets: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_size: 2048,
            embed_dim: super::embedding::EMBED_DIM,
            ngram_buckets: super::embedding::DEFAULT_BUCKETS,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub vocab: Vocabulary,
    pub params: ParamSet,
    /// Fixed n-gram vectors for out-of-vocabulary words.
    pub ngram_buckets: Array2<f64>,
    pub dropout: f64,
    /// Bumped on every parameter update; forward caches record it.
    version: u64,
}

/// A token given either by vocabulary index or as a raw word.
#[derive(Debug, Clone, Copy)]
pub enum Token<'a> {
    Index(usize),
    Word(&'a str),
}

impl GruModel {
    pub fn new(vocab: Vocabulary, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.state_size == 0 || cfg.embed_dim == 0 || cfg.ngram_buckets == 0 {
            return Err(Error::Config("state_size, embed_dim and ngram_buckets must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
        }
        let table = EmbeddingTable::init(&vocab, cfg.embed_dim, cfg.ngram_buckets, rng);
        let s = cfg.state_size;
        let layer1 = GruLayerParams::init(s, cfg.embed_dim, rng);
        let layer2 = GruLayerParams::init(s, s, rng);
        let k = 1.0 / (s as f64).sqrt();
        let out_w = Array2::from_shape_simple_fn((vocab.len(), s), || rng.gen_range(-k..k));
        let out_b = Array1::zeros(vocab.len());
        Ok(GruModel {
            params: ParamSet {
                embedding: table.word_vectors,
                layer1,
                layer2,
                out_w,
                out_b,
            },
            ngram_buckets: table.ngram_buckets,
            vocab,
            dropout: cfg.dropout,
            version: 0,
        })
    }

    /// Assembles a model from stored parameters, validating shapes.
    pub fn from_parts(vocab: Vocabulary, params: ParamSet, ngram_buckets: Array2<f64>, dropout: f64) -> Result<Self> {
        let s = params.layer1.state();
        let e = params.embedding.ncols();
        let checks = [
            ("embedding rows", vocab.len(), params.embedding.nrows()),
            ("layer1 input", e, params.layer1.input()),
            ("layer2 state", s, params.layer2.state()),
            ("layer2 input", s, params.layer2.input()),
            ("output rows", vocab.len(), params.out_w.nrows()),
            ("output cols", s, params.out_w.ncols()),
            ("output bias", vocab.len(), params.out_b.len()),
            ("n-gram dim", e, ngram_buckets.ncols()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        for l in [&params.layer1, &params.layer2] {
            for (what, b) in [("b_u", &l.b_u), ("b_r", &l.b_r), ("b_h", &l.b_h)] {
                if b.len() != l.state() {
                    return Err(Error::Dimension {
                        what,
                        expected: l.state(),
                        got: b.len(),
                    });
                }
            }
            if l.w_r.raw_dim() != l.w_u.raw_dim() || l.w_h.raw_dim() != l.w_u.raw_dim() {
                return Err(Error::Argument("GRU gate matrices differ in shape".into()));
            }
        }
        Ok(GruModel {
            vocab,
            params,
            ngram_buckets,
            dropout,
            version: 0,
        })
    }

    pub fn state_size(&self) -> usize {
        self.params.layer1.state()
    }

    pub fn embed_dim(&self) -> usize {
        self.params.embedding.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Marks the parameters as changed, invalidating outstanding forward caches.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    /// Embedding of a vocabulary index, or of a raw word via n-gram synthesis when unknown.
    pub fn embed(&self, token: Token<'_>) -> Array1<f64> {
        match token {
            Token::Index(i) => self.params.embedding.row(i).to_owned(),
            Token::Word(w) => match self.vocab.get(w) {
                Some(i) => self.params.embedding.row(i).to_owned(),
                None => {
                    let mut v = Array1::zeros(self.embed_dim());
                    let buckets = self.ngram_buckets.nrows() as u64;
                    for g in char_ngrams(w) {
                        v += &self.ngram_buckets.row((fnv1a64(g.as_bytes()) % buckets) as usize);
                    }
                    v
                }
            },
        }
    }

    fn gather_embeddings(&self, ids: impl Iterator<Item = usize>) -> Array2<f64> {
        let rows: Vec<ArrayView1<f64>> = ids.map(|i| self.params.embedding.row(i)).collect();
        ndarray::stack(Axis(0), &rows).expect("non-empty batch")
    }

    fn logits(&self, y: &Array2<f64>) -> Array2<f64> {
        y.dot(&self.params.out_w.t()) + &self.params.out_b
    }
}

/// Teacher-forcing inputs for a batch of captions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    /// `batch x state` initial states.
    pub upsilon: Array2<f64>,
    /// `batch x len`; `BOS` followed by `target` shifted right.
    pub input: Array2<usize>,
    /// `batch x len`
    pub target: Array2<usize>,
    /// 1 where the target is not `PAD`.
    pub mask: Array2<f64>,
}

impl TrainingBatch {
    /// `encoded` rows come from [`crate::ingest::encode_caption`] and share one length.
    pub fn new(upsilon: &[&[f64]], encoded: &[&[usize]]) -> Result<Self> {
        if upsilon.is_empty() || upsilon.len() != encoded.len() {
            return Err(Error::Argument(format!(
                "batch has {} codes for {} captions",
                upsilon.len(),
                encoded.len()
            )));
        }
        let state = upsilon[0].len();
        let len = encoded[0].len();
        if upsilon.iter().any(|u| u.len() != state) || encoded.iter().any(|e| e.len() != len) || len == 0 {
            return Err(Error::Argument("ragged batch".into()));
        }
        let b = upsilon.len();
        let ups = Array2::from_shape_fn((b, state), |(i, j)| upsilon[i][j]);
        let input = Array2::from_shape_fn((b, len), |(i, t)| encoded[i][t]);
        let target = Array2::from_shape_fn((b, len), |(i, t)| encoded[i].get(t + 1).copied().unwrap_or(PAD));
        let mask = target.mapv(|t| if t == PAD { 0.0 } else { 1.0 });
        Ok(TrainingBatch {
            upsilon: ups,
            input,
            target,
            mask,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn steps(&self) -> usize {
        self.input.ncols()
    }
}

/// Dropout behaviour of a forward pass.
pub enum Dropout<'a> {
    /// Inference: no masks.
    Off,
    /// Training: sample fresh masks.
    Sample(&'a mut ChaCha8Rng),
    /// Training with masks taken from an earlier pass.
    Fixed(&'a [StepMasks]),
}

/// Inverted-dropout masks for one time step (`batch x state`, entries 0 or `1/(1-rate)`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMasks {
    pub layer1: Array2<f64>,
    pub layer2: Array2<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    layer1: Vec<StepCache>,
    layer2: Vec<StepCache>,
    /// Layer-2 output after dropout, fed to the output layer.
    top: Vec<Array2<f64>>,
    pub masks: Option<Vec<StepMasks>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Per time step, `batch x vocab`.
    pub logits: Vec<Array2<f64>>,
    pub cache: ForwardCache,
}

impl ForwardPass {
    pub fn logits_at(&self, b: usize, t: usize) -> ArrayView1<'_, f64> {
        self.logits[t].row(b)
    }
}

fn sample_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

pub fn forward(model: &GruModel, batch: &TrainingBatch, dropout: Dropout<'_>) -> Result<ForwardPass> {
    let s = model.state_size();
    if batch.upsilon.ncols() != s {
        return Err(Error::Config(format!(
            "video code has {} dimensions but the model state has {s}",
            batch.upsilon.ncols()
        )));
    }
    if let Some(&bad) = batch.input.iter().find(|&&i| i >= model.vocab_size()) {
        return Err(Error::Argument(format!("token index {bad} outside vocabulary")));
    }
    let (b, steps) = (batch.batch_size(), batch.steps());
    let masks: Option<Vec<StepMasks>> = match dropout {
        Dropout::Off => None,
        Dropout::Fixed(m) => {
            if m.len() != steps || m.iter().any(|m| m.layer1.dim() != (b, s) || m.layer2.dim() != (b, s)) {
                return Err(Error::Argument("dropout masks do not match the batch".into()));
            }
            Some(m.to_vec())
        }
        Dropout::Sample(rng) => Some(
            (0..steps)
                .map(|_| StepMasks {
                    layer1: sample_mask(b, s, model.dropout, rng),
                    layer2: sample_mask(b, s, model.dropout, rng),
                })
                .collect(),
        ),
    };

    let mut h1 = batch.upsilon.clone();
    let mut h2 = batch.upsilon.clone();
    let mut layer1 = Vec::with_capacity(steps);
    let mut layer2 = Vec::with_capacity(steps);
    let mut top = Vec::with_capacity(steps);
    let mut logits = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = model.gather_embeddings(batch.input.column(t).iter().copied());
        let c1 = step(&model.params.layer1, h1.view(), x.view());
        let mut y1 = c1.h.clone();
        if let Some(m) = &masks {
            y1 *= &m[t].layer1;
        }
        let c2 = step(&model.params.layer2, h2.view(), y1.view());
        let mut y2 = c2.h.clone();
        if let Some(m) = &masks {
            y2 *= &m[t].layer2;
        }
        logits.push(model.logits(&y2));
        h1 = c1.h.clone();
        h2 = c2.h.clone();
        layer1.push(c1);
        layer2.push(c2);
        top.push(y2);
    }
    Ok(ForwardPass {
        logits,
        cache: ForwardCache {
            version: model.version,
            layer1,
            layer2,
            top,
            masks,
        },
    })
}

fn log_softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    row.mapv(|z| z - lse)
}

pub fn softmax(row: ArrayView1<f64>) -> Array1<f64> {
    log_softmax(row).mapv(f64::exp)
}

/// Mean negative log-likelihood of the targets over unmasked positions.
pub fn loss(logits: &[Array2<f64>], batch: &TrainingBatch) -> Result<f64> {
    let count = batch.mask.sum();
    if count == 0.0 {
        return Err(Error::Argument("every target position is masked".into()));
    }
    if logits.len() != batch.steps() {
        return Err(Error::Dimension {
            what: "logit steps",
            expected: batch.steps(),
            got: logits.len(),
        });
    }
    let mut total = 0.0;
    for (t, step_logits) in logits.iter().enumerate() {
        for b in 0..batch.batch_size() {
            let w = batch.mask[[b, t]];
            if w != 0.0 {
                total -= w * log_softmax(step_logits.row(b))[batch.target[[b, t]]];
            }
        }
    }
    Ok(total / count)
}

/// Exact gradients of [`loss`] with respect to every trainable tensor.
pub fn backward(model: &GruModel, batch: &TrainingBatch, pass: &ForwardPass) -> Result<ParamSet> {
    let cache = &pass.cache;
    if cache.version != model.version {
        return Err(Error::Internal(format!(
            "forward cache from parameter version {} used at version {}",
            cache.version, model.version
        )));
    }
    let (b, steps) = (batch.batch_size(), batch.steps());
    if cache.layer1.len() != steps || cache.layer1.first().is_some_and(|c| c.h.nrows() != b) {
        return Err(Error::Internal("forward cache does not match the batch".into()));
    }
    let count = batch.mask.sum();
    if count == 0.0 {
        return Err(Error::Argument("every target position is masked".into()));
    }

    let p = &model.params;
    let mut g = p.zeros_like();
    let s = model.state_size();
    let mut carry1 = Array2::<f64>::zeros((b, s));
    let mut carry2 = Array2::<f64>::zeros((b, s));

    for t in (0..steps).rev() {
        // d loss / d logits = (softmax - onehot) * mask / count
        let mut dlogits = pass.logits[t].clone();
        for (bi, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
            let w = batch.mask[[bi, t]] / count;
            if w == 0.0 {
                row.fill(0.0);
                continue;
            }
            let probs = softmax(row.view());
            row.assign(&probs);
            row[batch.target[[bi, t]]] -= 1.0;
            row *= w;
        }
        g.out_w += &dlogits.t().dot(&cache.top[t]);
        g.out_b += &dlogits.sum_axis(Axis(0));
        let mut dh2 = dlogits.dot(&p.out_w);
        if let Some(m) = &cache.masks {
            dh2 *= &m[t].layer2;
        }
        dh2 += &carry2;
        let (dprev2, dx2) = step_backward(&p.layer2, &cache.layer2[t], &dh2, &mut g.layer2);
        carry2 = dprev2;

        let mut dh1 = dx2;
        if let Some(m) = &cache.masks {
            dh1 *= &m[t].layer1;
        }
        dh1 += &carry1;
        let (dprev1, dx1) = step_backward(&p.layer1, &cache.layer1[t], &dh1, &mut g.layer1);
        carry1 = dprev1;

        for (bi, &tok) in batch.input.column(t).iter().enumerate() {
            let mut row = g.embedding.row_mut(tok);
            row += &dx1.row(bi);
        }
    }
    Ok(g)
}

/// Recurrent state for step-by-step decoding of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
}

impl DecoderState {
    pub fn new(model: &GruModel, upsilon: &[f64]) -> Result<Self> {
        if upsilon.len() != model.state_size() {
            return Err(Error::Config(format!(
                "video code has {} dimensions but the model state has {}",
                upsilon.len(),
                model.state_size()
            )));
        }
        let h = ArrayView2::from_shape((1, upsilon.len()), upsilon).unwrap().to_owned();
        Ok(DecoderState { h1: h.clone(), h2: h })
    }

    /// Feeds `token` and returns the next-token log-probabilities (inference mode).
    pub fn step(&mut self, model: &GruModel, token: usize) -> Array1<f64> {
        let x = model.gather_embeddings(std::iter::once(token));
        let c1 = step(&model.params.layer1, self.h1.view(), x.view());
        let c2 = step(&model.params.layer2, self.h2.view(), c1.h.view());
        let logits = model.logits(&c2.h);
        self.h1 = c1.h;
        self.h2 = c2.h;
        log_softmax(logits.slice(s![0, ..]))
    }
}
