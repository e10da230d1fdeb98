//! Model checkpoints: `EVEM`, u32 version, u32 header length, JSON header,
//! then every tensor as little-endian f64 in header order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::GruModel;
use super::params::{GruLayerParams, ParamSet, TENSOR_NAMES};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::ingest::Vocabulary;

pub const MAGIC: &[u8; 4] = b"EVEM";
pub const VERSION: u32 = 1;
const NGRAM_TENSOR: &str = "ngram_buckets";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub vocab: Vec<String>,
    pub state_size: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GruModel,
    pub train: TrainConfig,
    pub epoch: usize,
}

pub fn encode_checkpoint(model: &GruModel, train: &TrainConfig, epoch: usize) -> Vec<u8> {
    let mut tensors: Vec<TensorEntry> = TENSOR_NAMES
        .iter()
        .zip(model.params.shapes())
        .map(|(n, (rows, cols))| TensorEntry {
            name: n.to_string(),
            rows,
            cols,
        })
        .collect();
    tensors.push(TensorEntry {
        name: NGRAM_TENSOR.into(),
        rows: model.ngram_buckets.nrows(),
        cols: model.ngram_buckets.ncols(),
    });
    let header = CheckpointHeader {
        vocab: model.vocab.tokens().to_vec(),
        state_size: model.state_size(),
        embed_dim: model.embed_dim(),
        dropout: model.dropout,
        train: *train,
        seed: train.seed,
        epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * (model.params.num_params() + model.ngram_buckets.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let ngram = model.ngram_buckets.as_slice().expect("contiguous");
    for t in model.params.tensors().into_iter().chain(std::iter::once(ngram)) {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fail = |offset: usize, msg: String| Error::format(path, offset as u64, msg);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(fail(0, "not a model checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(4, format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| fail(8, format!("header length {hlen} exceeds file size")))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| fail(12, format!("bad header: {e}")))?;

    let vocab = Vocabulary::from_tokens(header.vocab.clone())?;
    let (v, s, e) = (vocab.len(), header.state_size, header.embed_dim);
    let mut params = ParamSet {
        embedding: Array2::zeros((v, e)),
        layer1: GruLayerParams::zeros(s, e),
        layer2: GruLayerParams::zeros(s, s),
        out_w: Array2::zeros((v, s)),
        out_b: Array1::zeros(v),
    };
    let ngram_entry = header.tensors.last().filter(|t| t.name == NGRAM_TENSOR);
    let Some(ngram_entry) = ngram_entry else {
        return Err(fail(12, "header lacks the n-gram table".into()));
    };
    let mut ngram = Array2::zeros((ngram_entry.rows, ngram_entry.cols));
    let expected: Vec<(&str, (usize, usize))> = TENSOR_NAMES.iter().copied().zip(params.shapes()).collect();
    if header.tensors.len() != expected.len() + 1 {
        return Err(fail(12, format!("expected {} tensors, header lists {}", expected.len() + 1, header.tensors.len())));
    }
    for (entry, (name, shape)) in header.tensors.iter().zip(&expected) {
        if entry.name != *name || (entry.rows, entry.cols) != *shape {
            return Err(fail(
                12,
                format!("tensor '{}' {}x{} does not match expected '{name}' {}x{}", entry.name, entry.rows, entry.cols, shape.0, shape.1),
            ));
        }
    }

    let mut offset = 12 + hlen;
    let ngram_slice = ngram.as_slice_mut().expect("contiguous");
    let mut targets = params.tensors_mut();
    targets.push(ngram_slice);
    for (t, entry) in targets.into_iter().zip(&header.tensors) {
        let need = t.len() * 8;
        let chunk = bytes
            .get(offset..offset + need)
            .ok_or_else(|| fail(offset, format!("payload truncated in tensor '{}'", entry.name)))?;
        for (x, b) in t.iter_mut().zip(chunk.chunks_exact(8)) {
            *x = f64::from_le_bytes(b.try_into().unwrap());
            if !x.is_finite() {
                return Err(fail(offset, format!("non-finite value in tensor '{}'", entry.name)));
            }
        }
        offset += need;
    }
    if offset != bytes.len() {
        return Err(fail(offset, format!("{} trailing bytes", bytes.len() - offset)));
    }
    let model = GruModel::from_parts(vocab, params, ngram, header.dropout)?;
    Ok(Checkpoint {
        model,
        train: header.train,
        epoch: header.epoch,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &GruModel, train: &TrainConfig, epoch: usize) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, train, epoch)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> GruModel {
        let vocab = Vocabulary::from_content(["a", "b", "c"]).unwrap();
        let cfg = ModelConfig {
            state_size: 4,
            embed_dim: 3,
            ngram_buckets: 5,
            dropout: 0.25,
        };
        GruModel::new(vocab, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = model();
        let cfg = TrainConfig {
            seed: 11,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &m, &cfg, 3).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.epoch, 3);
        assert_eq!(back.train, cfg);
        assert_eq!(encode_checkpoint(&back.model, &back.train, 3), fs::read(&path).unwrap());
    }

    #[test]
    fn rejects_damage() {
        let m = model();
        let bytes = encode_checkpoint(&m, &TrainConfig::default(), 1);
        let p = Path::new("x");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad, p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra, p).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_checkpoint(&nan, p).is_err());
    }
}
