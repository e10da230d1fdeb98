//! External data formats: activation tensors, detector and action outputs,
//! caption corpora, vocabularies, and frame sampling.

mod frames;
mod records;
mod tensor;
mod text;

pub use frames::sample_frames;
pub use records::{
    read_actions, read_corpus, read_detections, read_predictions, write_jsonl, ActionDistribution,
    CaptionCorpus, CorpusEntry, CorpusRecord, Detection, DetectionRecord, DetectionSet, FrameDetections,
    Prediction,
};
pub use tensor::{
    read_raw, read_tensor, write_raw, write_tensor, ActivationSeries, RawTensor, Source, HEADER_LEN,
    TENSOR_MAGIC, TENSOR_VERSION,
};
pub use text::{build_vocab, encode_caption, tokenize, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
