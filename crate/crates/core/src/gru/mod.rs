//! Two-layer GRU caption language model.

pub mod cell;
pub mod checkpoint;
pub mod decode;
pub mod embedding;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;

pub use cell::gru_cell;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use decode::{beam_decode, beam_search, greedy_decode, sequence_log_prob, Hypothesis};
pub use embedding::{char_ngrams, fnv1a64, EmbeddingTable, DEFAULT_BUCKETS, EMBED_DIM};
pub use model::{backward, forward, loss, softmax, DecoderState, Dropout, ForwardPass, GruModel, ModelConfig, StepMasks, Token, TrainingBatch};
pub use optim::{clip_global_norm, rmsprop_step, RmsProp};
pub use params::{GruLayerParams, ParamSet, TENSOR_NAMES};
pub use train::{build_samples, evaluate_loss, num_batches, train, EpochReport, TrainConfig, TrainingSample};
