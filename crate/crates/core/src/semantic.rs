//! Object and action semantics from detector and 3D-network outputs.
//!
//! Objects: for every dictionary-filtered detector label, a block
//! `[Pr, Fr, vx1, vy1, .., vx(q-1), vy(q-1)]` computed over `q` evenly sampled
//! frames. Actions: for every dictionary-filtered action label, a pair
//! `[predicted, Pr]` from the clip-averaged class distribution.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hft::sidecar;
use crate::ingest::{sample_frames, tokenize, write_raw, ActionDistribution, DetectionSet, RawTensor, Source, Vocabulary};

/// Labels whose every word is in the dictionary, deduplicated and sorted.
pub fn intersect_labels<I, S>(raw_labels: I, vocab: &Vocabulary) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    raw_labels
        .into_iter()
        .filter(|l| {
            let words = tokenize(l.as_ref());
            !words.is_empty() && words.iter().all(|w| vocab.contains(w))
        })
        .map(|l| l.as_ref().to_owned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Object and action labels retained after dictionary filtering.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub object_labels: Vec<String>,
    pub action_labels: Vec<String>,
}

impl LabelSpace {
    /// Label space over every label observed in the given detector and action outputs.
    pub fn from_outputs(detections: &[DetectionSet], actions: &[ActionDistribution], vocab: &Vocabulary) -> Self {
        let objects = detections
            .iter()
            .flat_map(|s| &s.frames)
            .flat_map(|f| &f.detections)
            .map(|d| d.label.as_str());
        let acts = actions.iter().flat_map(|a| a.labels.iter().map(String::as_str));
        LabelSpace {
            object_labels: intersect_labels(objects, vocab),
            action_labels: intersect_labels(acts, vocab),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCodeConfig {
    /// Sampled frames per video.
    pub q: usize,
    /// Maximum number of same-class objects expected in a frame.
    pub max_objects: usize,
}

impl Default for ObjectCodeConfig {
    fn default() -> Self {
        ObjectCodeConfig { q: 5, max_objects: 10 }
    }
}

impl ObjectCodeConfig {
    pub fn block_len(&self) -> usize {
        2 + 2 * (self.q - 1)
    }
}

/// γ: one block per object label, in label-space order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCode {
    pub labels: Vec<String>,
    pub config: ObjectCodeConfig,
    pub values: Vec<f64>,
}

impl ObjectCode {
    pub fn block(&self, label: usize) -> &[f64] {
        let len = self.config.block_len();
        &self.values[label * len..(label + 1) * len]
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            labels: &'a [String],
            q: usize,
            max_objects: usize,
        }
        write_with_manifest(
            path.as_ref(),
            &self.values,
            &Manifest {
                labels: &self.labels,
                q: self.config.q,
                max_objects: self.config.max_objects,
            },
        )
    }
}

/// η: `[predicted, Pr]` per action label, in label-space order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCode {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ActionCode {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            labels: &'a [String],
        }
        write_with_manifest(path.as_ref(), &self.values, &Manifest { labels: &self.labels })
    }
}

fn write_with_manifest(path: &Path, values: &[f64], manifest: &impl Serialize) -> Result<()> {
    let raw = RawTensor::row_vector(Source::Frame2d, values.iter().map(|&v| v as f32).collect());
    write_raw(&raw, path)?;
    let side = sidecar(path);
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

#[derive(Debug, Clone, Copy, Default)]
struct FrameStats {
    count: usize,
    max_conf: f64,
    sum_x: f64,
    sum_y: f64,
}

impl FrameStats {
    fn centroid(&self) -> Option<(f64, f64)> {
        (self.count > 0).then(|| (self.sum_x / self.count as f64, self.sum_y / self.count as f64))
    }
}

/// Builds γ from the detections on `q` frames sampled from a `frames`-long video.
///
/// Per label: `Pr` is the highest confidence on any sampled frame; `Fr` the largest
/// per-frame count divided by `max_objects`, capped at 1; velocity `z` is the change
/// of the mean box centre between sampled frames `z` and `z+1`, zero when the label
/// is missing from either. Labels outside `labels` are ignored, and a sampled frame
/// without a record counts as having no detections.
pub fn object_code(
    dets: &DetectionSet,
    frames: usize,
    labels: &[String],
    cfg: ObjectCodeConfig,
) -> Result<ObjectCode> {
    if cfg.q < 2 {
        return Err(Error::Argument(format!("q must be at least 2, got {}", cfg.q)));
    }
    if cfg.max_objects == 0 {
        return Err(Error::Argument("max_objects must be at least 1".into()));
    }
    let sampled = sample_frames(frames, cfg.q);
    let block = cfg.block_len();
    // stats[label][z]
    let mut stats = vec![vec![FrameStats::default(); cfg.q]; labels.len()];
    for (z, &f) in sampled.iter().enumerate() {
        let Some(frame) = dets.frame(f) else { continue };
        for d in &frame.detections {
            let Ok(i) = labels.binary_search(&d.label) else { continue };
            let s = &mut stats[i][z];
            s.max_conf = if s.count == 0 { d.confidence } else { s.max_conf.max(d.confidence) };
            s.count += 1;
            s.sum_x += d.cx;
            s.sum_y += d.cy;
        }
    }
    let mut values = vec![0.0; block * labels.len()];
    for (i, per_frame) in stats.iter().enumerate() {
        if per_frame.iter().all(|s| s.count == 0) {
            continue;
        }
        let out = &mut values[i * block..(i + 1) * block];
        out[0] = per_frame
            .iter()
            .filter(|s| s.count > 0)
            .map(|s| s.max_conf)
            .fold(0.0, f64::max);
        let max_count = per_frame.iter().map(|s| s.count).max().unwrap_or(0);
        out[1] = (max_count as f64 / cfg.max_objects as f64).min(1.0);
        for z in 0..cfg.q - 1 {
            if let (Some(a), Some(b)) = (per_frame[z].centroid(), per_frame[z + 1].centroid()) {
                out[2 + 2 * z] = b.0 - a.0;
                out[3 + 2 * z] = b.1 - a.1;
            }
        }
    }
    Ok(ObjectCode {
        labels: labels.to_vec(),
        config: cfg,
        values,
    })
}

/// Builds η from the clip-averaged class distribution. The predicted action is the
/// argmax over all network labels (ties to the lexicographically first); it is
/// flagged only if it survives dictionary filtering.
pub fn action_code(acts: &ActionDistribution, labels: &[String]) -> Result<ActionCode> {
    acts.validate().map_err(Error::Argument)?;
    let clips = acts.per_clip.len() as f64;
    let mean: Vec<f64> = (0..acts.labels.len())
        .map(|j| acts.per_clip.iter().map(|c| c[j]).sum::<f64>() / clips)
        .collect();
    let predicted = (0..mean.len()).reduce(|best, j| {
        if mean[j] > mean[best] || (mean[j] == mean[best] && acts.labels[j] < acts.labels[best]) {
            j
        } else {
            best
        }
    });
    let predicted = predicted.map(|j| acts.labels[j].as_str());
    let mut values = Vec::with_capacity(2 * labels.len());
    for label in labels {
        let flag = if predicted == Some(label.as_str()) { 1.0 } else { 0.0 };
        let pr = acts
            .labels
            .iter()
            .position(|l| l == label)
            .map_or(0.0, |j| mean[j].clamp(0.0, 1.0));
        values.extend([flag, pr]);
    }
    Ok(ActionCode {
        labels: labels.to_vec(),
        values,
    })
}
