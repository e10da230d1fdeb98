//! Mini-batch training loop.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward, loss, Dropout, GruModel, TrainingBatch};
use super::optim::{clip_global_norm, RmsProp, DEFAULT_CLIP, DEFAULT_DECAY, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::ingest::{encode_caption, CaptionCorpus};

/// RNG stream ids derived from the training seed.
pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;
pub const DROPOUT_STREAM: u64 = 2;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub seed: u64,
    pub grad_clip: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            batch: 60,
            epochs: 50,
            max_len: 20,
            seed: 0,
            grad_clip: DEFAULT_CLIP,
            rmsprop_decay: DEFAULT_DECAY,
            rmsprop_eps: DEFAULT_EPS,
        }
    }
}

/// One (video, caption) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub video_id: String,
    pub upsilon: Vec<f64>,
    /// Output of [`encode_caption`].
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Token-weighted mean cross-entropy over the epoch's batches.
    pub loss: f64,
    pub batches: usize,
    pub tokens: usize,
}

pub fn num_batches(samples: usize, batch: usize) -> usize {
    samples.div_ceil(batch)
}

/// Pairs every caption with its video's code. Fails before any work if codes are missing.
pub fn build_samples(
    corpus: &CaptionCorpus,
    codes: &HashMap<String, Vec<f64>>,
    model: &GruModel,
    max_len: usize,
) -> Result<Vec<TrainingSample>> {
    let missing: BTreeSet<String> = corpus
        .entries
        .iter()
        .filter(|e| !codes.contains_key(&e.video_id))
        .map(|e| e.video_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVideos(missing.into_iter().collect()));
    }
    let mut out = Vec::new();
    for entry in &corpus.entries {
        let upsilon = &codes[&entry.video_id];
        if upsilon.len() != model.state_size() {
            return Err(Error::Config(format!(
                "code for '{}' has {} dimensions but the model state has {}",
                entry.video_id,
                upsilon.len(),
                model.state_size()
            )));
        }
        for caption in &entry.captions {
            out.push(TrainingSample {
                video_id: entry.video_id.clone(),
                upsilon: upsilon.clone(),
                tokens: encode_caption(caption, &model.vocab, max_len)?,
            });
        }
    }
    Ok(out)
}

fn make_batch(samples: &[TrainingSample], order: &[usize]) -> Result<TrainingBatch> {
    let ups: Vec<&[f64]> = order.iter().map(|&i| samples[i].upsilon.as_slice()).collect();
    let toks: Vec<&[usize]> = order.iter().map(|&i| samples[i].tokens.as_slice()).collect();
    TrainingBatch::new(&ups, &toks)
}

/// Trains in place. `on_epoch` runs after every epoch, typically to write a checkpoint.
pub fn train<F>(model: &mut GruModel, samples: &[TrainingSample], cfg: &TrainConfig, mut on_epoch: F) -> Result<Vec<EpochReport>>
where
    F: FnMut(&EpochReport, &GruModel) -> Result<()>,
{
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch must be positive".into()));
    }
    let mut opt = RmsProp::new(&model.params, cfg.lr, cfg.rmsprop_decay, cfg.rmsprop_eps)?;
    let mut shuffle_rng = seeded_rng(cfg.seed, SHUFFLE_STREAM);
    let mut dropout_rng = seeded_rng(cfg.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut reports = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let batch = make_batch(samples, chunk)?;
            let count = batch.mask.sum();
            if count == 0.0 {
                continue;
            }
            let pass = forward(model, &batch, Dropout::Sample(&mut dropout_rng))?;
            let batch_loss = loss(&pass.logits, &batch)?;
            let mut grads = backward(model, &batch, &pass)?;
            clip_global_norm(&mut grads, cfg.grad_clip);
            opt.step(&mut model.params, &grads);
            model.touch();
            total += batch_loss * count;
            tokens += count as usize;
            batches += 1;
        }
        if !total.is_finite() {
            return Err(Error::Internal(format!("training diverged in epoch {epoch}")));
        }
        let report = EpochReport {
            epoch,
            loss: total / tokens.max(1) as f64,
            batches,
            tokens,
        };
        on_epoch(&report, model)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Token-weighted cross-entropy of `samples` with dropout off.
pub fn evaluate_loss(model: &GruModel, samples: &[TrainingSample], batch: usize) -> Result<f64> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    let mut tokens = 0.0;
    for chunk in order.chunks(batch.max(1)) {
        let b = make_batch(samples, chunk)?;
        let count = b.mask.sum();
        if count == 0.0 {
            continue;
        }
        let pass = forward(model, &b, Dropout::Off)?;
        total += loss(&pass.logits, &b)? * count;
        tokens += count;
    }
    if tokens == 0.0 {
        return Err(Error::Argument("every target position is masked".into()));
    }
    Ok(total / tokens)
}

/// The loss log written next to checkpoints.
pub fn loss_csv(reports: &[EpochReport]) -> String {
    let mut out = String::from("epoch,loss,batches,tokens\n");
    for r in reports {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.batches, r.tokens));
    }
    out
}
