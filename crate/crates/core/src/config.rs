//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. Keys not given keep their defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gru::{ModelConfig, TrainConfig};
use crate::hft::HftConfig;
use crate::semantic::ObjectCodeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub p: usize,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub q: usize,
    /// Maximum same-class objects per frame.
    #[serde(rename = "N")]
    pub n: usize,
    pub state_size: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub train_seed: u64,
    pub beam: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub ngram_buckets: usize,
    pub grad_clip: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            p: 4,
            projection_dim: 2048,
            projection_seed: 1,
            q: 5,
            n: 10,
            state_size: 2048,
            lr: 2e-4,
            batch: 60,
            epochs: 50,
            dropout: 0.5,
            max_len: 20,
            train_seed: 0,
            beam: 5,
            vocab_size: 9450,
            embed_dim: crate::gru::EMBED_DIM,
            ngram_buckets: crate::gru::DEFAULT_BUCKETS,
            grad_clip: crate::gru::optim::DEFAULT_CLIP,
            rmsprop_decay: crate::gru::optim::DEFAULT_DECAY,
            rmsprop_eps: crate::gru::optim::DEFAULT_EPS,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {value:?}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 19] = [
        "p",
        "projection_dim",
        "projection_seed",
        "q",
        "N",
        "state_size",
        "lr",
        "batch",
        "epochs",
        "dropout",
        "max_len",
        "train_seed",
        "beam",
        "vocab_size",
        "embed_dim",
        "ngram_buckets",
        "grad_clip",
        "rmsprop_decay",
        "rmsprop_eps",
    ];

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected key = value, got {body:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {line}: {key} set twice")));
            }
            match key {
                "p" => cfg.p = parse(key, value, line)?,
                "projection_dim" => cfg.projection_dim = parse(key, value, line)?,
                "projection_seed" => cfg.projection_seed = parse(key, value, line)?,
                "q" => cfg.q = parse(key, value, line)?,
                "N" => cfg.n = parse(key, value, line)?,
                "state_size" => cfg.state_size = parse(key, value, line)?,
                "lr" => cfg.lr = parse(key, value, line)?,
                "batch" => cfg.batch = parse(key, value, line)?,
                "epochs" => cfg.epochs = parse(key, value, line)?,
                "dropout" => cfg.dropout = parse(key, value, line)?,
                "max_len" => cfg.max_len = parse(key, value, line)?,
                "train_seed" => cfg.train_seed = parse(key, value, line)?,
                "beam" => cfg.beam = parse(key, value, line)?,
                "vocab_size" => cfg.vocab_size = parse(key, value, line)?,
                "embed_dim" => cfg.embed_dim = parse(key, value, line)?,
                "ngram_buckets" => cfg.ngram_buckets = parse(key, value, line)?,
                "grad_clip" => cfg.grad_clip = parse(key, value, line)?,
                "rmsprop_decay" => cfg.rmsprop_decay = parse(key, value, line)?,
                "rmsprop_eps" => cfg.rmsprop_eps = parse(key, value, line)?,
                _ => return Err(Error::Config(format!("line {line}: unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every key in canonical order; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pairs: [(&str, String); 19] = [
            ("p", self.p.to_string()),
            ("projection_dim", self.projection_dim.to_string()),
            ("projection_seed", self.projection_seed.to_string()),
            ("q", self.q.to_string()),
            ("N", self.n.to_string()),
            ("state_size", self.state_size.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("max_len", self.max_len.to_string()),
            ("train_seed", self.train_seed.to_string()),
            ("beam", self.beam.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("ngram_buckets", self.ngram_buckets.to_string()),
            ("grad_clip", format!("{:?}", self.grad_clip)),
            ("rmsprop_decay", format!("{:?}", self.rmsprop_decay)),
            ("rmsprop_eps", format!("{:?}", self.rmsprop_eps)),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p", self.p),
            ("projection_dim", self.projection_dim),
            ("N", self.n),
            ("state_size", self.state_size),
            ("batch", self.batch),
            ("beam", self.beam),
            ("embed_dim", self.embed_dim),
            ("ngram_buckets", self.ngram_buckets),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be at least 1")));
        }
        if self.q < 2 {
            return Err(Error::Config(format!("q must be at least 2, got {}", self.q)));
        }
        if self.max_len < 3 {
            return Err(Error::Config(format!("max_len must be at least 3, got {}", self.max_len)));
        }
        if self.vocab_size < crate::ingest::RESERVED.len() + 1 {
            return Err(Error::Config(format!("vocab_size must exceed {}", crate::ingest::RESERVED.len())));
        }
        if self.state_size != self.projection_dim {
            return Err(Error::Config(format!(
                "state_size ({}) must equal projection_dim ({}) because the video code is the initial state",
                self.state_size, self.projection_dim
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::Config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || self.rmsprop_eps.is_nan() || self.rmsprop_eps <= 0.0 {
            return Err(Error::Config("rmsprop_decay must be in [0, 1) and rmsprop_eps positive".into()));
        }
        Ok(())
    }

    pub fn hft(&self) -> HftConfig {
        HftConfig { p: self.p }
    }

    pub fn objects(&self) -> ObjectCodeConfig {
        ObjectCodeConfig {
            q: self.q,
            max_objects: self.n,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            state_size: self.state_size,
            embed_dim: self.embed_dim,
            ngram_buckets: self.ngram_buckets,
            dropout: self.dropout,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch: self.batch,
            epochs: self.epochs,
            max_len: self.max_len,
            seed: self.train_seed,
            grad_clip: self.grad_clip,
            rmsprop_decay: self.rmsprop_decay,
            rmsprop_eps: self.rmsprop_eps,
        }
    }
}
