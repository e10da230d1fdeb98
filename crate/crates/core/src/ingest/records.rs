//! JSON Lines readers and writers for detections, actions, caption corpora and predictions.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::text::tokenize;
use crate::error::{Error, Result};

/// One detector output, with the box normalized by frame width and height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

/// Detections for one video, frames in strictly increasing order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub video_id: String,
    pub frames: Vec<FrameDetections>,
}

impl DetectionSet {
    pub fn frame(&self, index: usize) -> Option<&FrameDetections> {
        self.frames
            .binary_search_by_key(&index, |f| f.frame_index)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// Number of frames implied by the last frame index.
    pub fn frame_count(&self) -> usize {
        self.frames.last().map_or(0, |f| f.frame_index + 1)
    }
}

/// One line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

/// Class distributions from the 3D network, one vector per clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub video_id: String,
    pub labels: Vec<String>,
    pub per_clip: Vec<Vec<f64>>,
}

impl ActionDistribution {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.per_clip.is_empty() {
            return Err("no clips".into());
        }
        for (c, probs) in self.per_clip.iter().enumerate() {
            if probs.len() != self.labels.len() {
                return Err(format!(
                    "clip {c} has {} probabilities for {} labels",
                    probs.len(),
                    self.labels.len()
                ));
            }
            if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(format!("clip {c} has invalid probability {p}"));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(format!("clip {c} probabilities sum to {sum}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub video_id: String,
    pub captions: Vec<Vec<String>>,
}

/// Tokenized reference captions keyed by video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaptionCorpus {
    pub entries: Vec<CorpusEntry>,
}

impl CaptionCorpus {
    pub fn get(&self, video_id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }

    pub fn captions(&self) -> impl Iterator<Item = &Vec<String>> {
        self.entries.iter().flat_map(|e| e.captions.iter())
    }
}

/// One line of a corpus file: raw, untokenized sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub video_id: String,
    pub captions: Vec<String>,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub caption: String,
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn validate_detection(d: &Detection) -> std::result::Result<(), String> {
    if !unit(d.confidence) {
        return Err(format!("confidence {} of '{}' outside [0,1]", d.confidence, d.label));
    }
    for (name, v) in [("cx", d.cx), ("cy", d.cy), ("w", d.w), ("h", d.h)] {
        if !unit(v) {
            return Err(format!("{name} = {v} of '{}' outside [0,1]", d.label));
        }
    }
    Ok(())
}

/// Parses each non-blank line; the closure receives the 1-based line number.
fn read_lines<T: DeserializeOwned>(
    path: &Path,
    mut each: impl FnMut(usize, T) -> std::result::Result<(), String>,
) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| Error::record(path, i + 1, e.to_string()))?;
        each(i + 1, record).map_err(|msg| Error::record(path, i + 1, msg))?;
    }
    Ok(())
}

/// Reads a detections file. Videos are returned in order of first appearance.
pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionSet>> {
    let mut sets: Vec<DetectionSet> = Vec::new();
    read_lines(path.as_ref(), |_, rec: DetectionRecord| {
        for d in &rec.detections {
            validate_detection(d)?;
        }
        let set = match sets.iter_mut().position(|s| s.video_id == rec.video_id) {
            Some(i) => &mut sets[i],
            None => {
                sets.push(DetectionSet {
                    video_id: rec.video_id.clone(),
                    frames: Vec::new(),
                });
                sets.last_mut().unwrap()
            }
        };
        if let Some(last) = set.frames.last() {
            if rec.frame_index <= last.frame_index {
                return Err(format!(
                    "frame_index {} of '{}' not after {}",
                    rec.frame_index, rec.video_id, last.frame_index
                ));
            }
        }
        set.frames.push(FrameDetections {
            frame_index: rec.frame_index,
            detections: rec.detections,
        });
        Ok(())
    })?;
    Ok(sets)
}

pub fn read_actions(path: impl AsRef<Path>) -> Result<Vec<ActionDistribution>> {
    let mut out = Vec::new();
    read_lines(path.as_ref(), |_, rec: ActionDistribution| {
        rec.validate()?;
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

/// Reads raw captions and tokenizes them.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<CaptionCorpus> {
    let mut corpus = CaptionCorpus::default();
    read_lines(path.as_ref(), |_, rec: CorpusRecord| {
        if rec.captions.is_empty() {
            return Err(format!("video '{}' has no captions", rec.video_id));
        }
        let mut captions = Vec::with_capacity(rec.captions.len());
        for raw in &rec.captions {
            let tokens = tokenize(raw);
            if tokens.is_empty() {
                return Err(format!("caption {raw:?} has no tokens"));
            }
            captions.push(tokens);
        }
        corpus.entries.push(CorpusEntry {
            video_id: rec.video_id,
            captions,
        });
        Ok(())
    })?;
    Ok(corpus)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    read_lines(path.as_ref(), |_, rec: Prediction| {
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
