//! Deterministic toy datasets whose captions are recoverable from the planted signals.
//!
//! Each video plants a noun (seen by the detector, once or twice per frame),
//! a verb (the frequency of its activation sinusoids and the peak of its
//! action distribution), and a caption built from both. The detector and the
//! action network also emit labels that the dictionary filters out.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    sample_frames, write_jsonl, write_tensor, ActionDistribution, ActivationSeries, CorpusRecord, Detection,
    DetectionRecord, Source, Vocabulary,
};

pub const DISTRACTOR_OBJECT: &str = "fire hydrant";
pub const DISTRACTOR_ACTION: &str = "juggling";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub frames: usize,
    pub n_clips: usize,
    pub m: usize,
    pub k: usize,
    pub q: usize,
    pub max_objects: usize,
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_videos: 20,
            frames: 16,
            // the 3D series must have at least 4 steps
            n_clips: 4,
            m: 12,
            k: 8,
            q: 5,
            max_objects: 10,
            nouns: ["bird", "boy", "car", "cat", "dog", "horse"].map(String::from).to_vec(),
            verbs: ["dancing", "jumping", "running", "swimming"].map(String::from).to_vec(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_videos", self.n_videos),
            ("m", self.m),
            ("k", self.k),
            ("nouns", self.nouns.len()),
            ("verbs", self.verbs.len()),
            ("max_objects", self.max_objects),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth {name} must be at least 1")));
        }
        if self.frames < 4 || self.n_clips < 4 {
            return Err(Error::Config("synth frames and n_clips must be at least 4".into()));
        }
        if self.q < 2 || self.q > self.frames {
            return Err(Error::Config(format!("synth q must be in 2..={}", self.frames)));
        }
        if self.max_objects < 2 {
            return Err(Error::Config("synth max_objects must be at least 2".into()));
        }
        Ok(())
    }
}

/// Ground truth for one generated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedVideo {
    pub video_id: String,
    pub noun: String,
    pub verb: String,
    pub count: usize,
    /// Highest noun confidence over the sampled frames.
    pub pr: f64,
    pub fr: f64,
    /// Centroid velocities between consecutive sampled frames.
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub videos: Vec<PlantedVideo>,
}

/// In-memory form of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub manifest: SynthManifest,
    pub frames2d: Vec<ActivationSeries>,
    pub clips3d: Vec<ActivationSeries>,
    pub detections: Vec<DetectionRecord>,
    pub actions: Vec<ActionDistribution>,
    pub corpus: Vec<CorpusRecord>,
    pub dictionary: Vocabulary,
}

pub fn caption_for(noun: &str, verb: &str, count: usize) -> String {
    if count == 1 {
        format!("a {noun} is {verb}")
    } else {
        format!("two {noun}s are {verb}")
    }
}

/// Spellings of one caption that tokenize identically.
fn variants(caption: &str, n: usize) -> Vec<String> {
    let mut upper = caption.to_owned();
    upper[..1].make_ascii_uppercase();
    [format!("{upper}."), caption.to_owned(), format!("{upper}!")][..n].to_vec()
}

fn sinusoid_series(
    video_id: &str,
    source: Source,
    steps: usize,
    neurons: usize,
    freq: usize,
    rng: &mut ChaCha8Rng,
) -> ActivationSeries {
    let mut values = vec![0f32; steps * neurons];
    for j in 0..neurons {
        let amp = rng.gen_range(0.5..1.5);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let offset = rng.gen_range(0.0..0.5);
        for t in 0..steps {
            let x = std::f64::consts::TAU * freq as f64 * t as f64 / steps as f64 + phase;
            let noise = rng.gen_range(-0.02..0.02);
            values[t * neurons + j] = (offset + amp * x.sin() + noise) as f32;
        }
    }
    ActivationSeries::new(video_id, source, steps, neurons, values).expect("synthetic series is valid")
}

/// Centre x at each sampled frame, evenly spaced from 0.1 to 0.9.
fn anchor_x(z: usize, q: usize) -> f64 {
    0.1 + 0.8 * z as f64 / (q - 1) as f64
}

fn track_x(frame: usize, sampled: &[usize], q: usize) -> f64 {
    match sampled.binary_search(&frame) {
        Ok(z) => anchor_x(z, q),
        Err(z) => {
            let (a, b) = (sampled[z - 1], sampled[z]);
            let (xa, xb) = (anchor_x(z - 1, q), anchor_x(z, q));
            xa + (xb - xa) * (frame - a) as f64 / (b - a) as f64
        }
    }
}

pub fn build(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sampled = sample_frames(cfg.frames, cfg.q);
    if sampled.len() != cfg.q {
        return Err(Error::Config("synth frames too few for q distinct samples".into()));
    }
    let mut action_labels = cfg.verbs.clone();
    action_labels.push(DISTRACTOR_ACTION.into());

    let mut ds = SynthDataset {
        manifest: SynthManifest {
            config: cfg.clone(),
            videos: Vec::new(),
        },
        frames2d: Vec::new(),
        clips3d: Vec::new(),
        detections: Vec::new(),
        actions: Vec::new(),
        corpus: Vec::new(),
        dictionary: Vocabulary::from_content(Vec::<String>::new())?,
    };
    let width = cfg.n_videos.to_string().len().max(2);
    for i in 0..cfg.n_videos {
        let video_id = format!("video{:0width$}", i + 1);
        let noun_idx = rng.gen_range(0..cfg.nouns.len());
        let verb_idx = rng.gen_range(0..cfg.verbs.len());
        let count = rng.gen_range(1..=2);
        let noun = cfg.nouns[noun_idx].clone();
        let verb = cfg.verbs[verb_idx].clone();

        ds.frames2d.push(sinusoid_series(&video_id, Source::Frame2d, cfg.frames, cfg.m, verb_idx + 1, &mut rng));
        ds.clips3d.push(sinusoid_series(&video_id, Source::Clip3d, cfg.n_clips, cfg.k, verb_idx + 1, &mut rng));

        let ys: &[f64] = if count == 1 { &[0.5] } else { &[0.35, 0.65] };
        let mut pr: f64 = 0.0;
        for f in 0..cfg.frames {
            let cx = track_x(f, &sampled, cfg.q);
            let mut detections: Vec<Detection> = ys
                .iter()
                .map(|&cy| Detection {
                    label: noun.clone(),
                    confidence: rng.gen_range(0.6..0.99),
                    cx,
                    cy,
                    w: 0.1,
                    h: 0.2,
                })
                .collect();
            if sampled.binary_search(&f).is_ok() {
                pr = detections.iter().map(|d| d.confidence).fold(pr, f64::max);
            }
            if rng.gen_bool(0.3) {
                detections.push(Detection {
                    label: DISTRACTOR_OBJECT.into(),
                    confidence: rng.gen_range(0.3..0.9),
                    cx: rng.gen_range(0.1..0.9),
                    cy: rng.gen_range(0.1..0.9),
                    w: 0.05,
                    h: 0.1,
                });
            }
            ds.detections.push(DetectionRecord {
                video_id: video_id.clone(),
                frame_index: f,
                detections,
            });
        }
        let vx: Vec<f64> = (0..cfg.q - 1).map(|z| anchor_x(z + 1, cfg.q) - anchor_x(z, cfg.q)).collect();

        let per_clip = (0..cfg.n_clips)
            .map(|_| {
                let mut p: Vec<f64> = (0..action_labels.len()).map(|_| rng.gen_range(0.0..0.1)).collect();
                p[verb_idx] += rng.gen_range(0.6..0.8);
                let s: f64 = p.iter().sum();
                p.iter().map(|x| x / s).collect()
            })
            .collect();
        ds.actions.push(ActionDistribution {
            video_id: video_id.clone(),
            labels: action_labels.clone(),
            per_clip,
        });

        let caption = caption_for(&noun, &verb, count);
        let n_captions = rng.gen_range(2..=3);
        ds.corpus.push(CorpusRecord {
            video_id: video_id.clone(),
            captions: variants(&caption, n_captions),
        });
        ds.manifest.videos.push(PlantedVideo {
            video_id,
            noun,
            verb,
            count,
            pr,
            fr: (count as f64 / cfg.max_objects as f64).min(1.0),
            vy: vec![0.0; vx.len()],
            vx,
            caption,
        });
    }

    let mut words: Vec<String> = ["a", "is", "two", "are"].map(String::from).to_vec();
    words.extend(cfg.nouns.iter().cloned());
    words.extend(cfg.nouns.iter().map(|n| format!("{n}s")));
    words.extend(cfg.verbs.iter().cloned());
    words.sort();
    words.dedup();
    ds.dictionary = Vocabulary::from_content(words)?;
    Ok(ds)
}

/// Writes a dataset:
/// `activations2d/<id>.tensor`, `activations3d/<id>.tensor`, `detections.jsonl`,
/// `actions.jsonl`, `corpus.jsonl`, `dictionary.txt`, `MANIFEST.json`.
pub fn generate(cfg: &SynthConfig, out: impl AsRef<Path>) -> Result<SynthManifest> {
    let out = out.as_ref();
    let ds = build(cfg)?;
    let d2 = out.join("activations2d");
    let d3 = out.join("activations3d");
    for d in [&d2, &d3] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in &ds.frames2d {
        write_tensor(s, d2.join(format!("{}.tensor", s.video_id)))?;
    }
    for s in &ds.clips3d {
        write_tensor(s, d3.join(format!("{}.tensor", s.video_id)))?;
    }
    write_jsonl(&ds.detections, out.join("detections.jsonl"))?;
    write_jsonl(&ds.actions, out.join("actions.jsonl"))?;
    write_jsonl(&ds.corpus, out.join("corpus.jsonl"))?;
    ds.dictionary.write(out.join("dictionary.txt"))?;
    let path = out.join("MANIFEST.json");
    let mut json = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(ds.manifest)
}

/// Two series with identical per-neuron values in different temporal order:
/// A is a sinusoid, B the same samples sorted ascending per neuron.
pub fn generate_ambiguous_pair(cfg: &SynthConfig) -> Result<(ActivationSeries, ActivationSeries)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (steps, neurons) = (cfg.frames, cfg.m);
    let a = sinusoid_series("ambiguous_a", Source::Frame2d, steps, neurons, 1, &mut rng);
    let mut b_values = vec![0f32; steps * neurons];
    for j in 0..neurons {
        let mut col: Vec<f32> = (0..steps).map(|t| a.at(t, j)).collect();
        col.sort_by(f32::total_cmp);
        for (t, v) in col.into_iter().enumerate() {
            b_values[t * neurons + j] = v;
        }
    }
    let b = ActivationSeries::new("ambiguous_b", Source::Frame2d, steps, neurons, b_values)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hft::{encode_activations, mean_pool, HftConfig};
    use crate::ingest::{read_actions, read_corpus, read_detections, read_tensor};
    use crate::semantic::{action_code, object_code, LabelSpace, ObjectCodeConfig};

    fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        };
        generate(&cfg, a.path()).unwrap();
        generate(&cfg, b.path()).unwrap();
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        assert_eq!(ta.len(), 2 * 20 + 5);
        assert_eq!(ta, tb);
        let c = tempfile::tempdir().unwrap();
        generate(&SynthConfig { seed: 8, ..cfg }, c.path()).unwrap();
        assert_ne!(ta, tree(c.path()));
    }

    #[test]
    fn files_pass_validators_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig::default();
        let manifest = generate(&cfg, dir.path()).unwrap();
        let dets = read_detections(dir.path().join("detections.jsonl")).unwrap();
        let acts = read_actions(dir.path().join("actions.jsonl")).unwrap();
        let corpus = read_corpus(dir.path().join("corpus.jsonl")).unwrap();
        let dict = Vocabulary::read(dir.path().join("dictionary.txt")).unwrap();
        let space = LabelSpace::from_outputs(&dets, &acts, &dict);
        assert!(!space.object_labels.contains(&DISTRACTOR_OBJECT.to_string()));
        assert!(!space.action_labels.contains(&DISTRACTOR_ACTION.to_string()));
        let ocfg = ObjectCodeConfig {
            q: cfg.q,
            max_objects: cfg.max_objects,
        };
        for (i, planted) in manifest.videos.iter().enumerate() {
            let s = read_tensor(dir.path().join("activations2d").join(format!("{}.tensor", planted.video_id))).unwrap();
            assert_eq!((s.steps, s.neurons), (16, 12));
            let code = object_code(&dets[i], s.steps, &space.object_labels, ocfg).unwrap();
            let li = space.object_labels.binary_search(&planted.noun).unwrap();
            let block = code.block(li);
            assert_eq!(block[0], planted.pr);
            assert_eq!(block[1], planted.fr);
            for z in 0..cfg.q - 1 {
                assert_eq!(block[2 + 2 * z], planted.vx[z]);
                assert_eq!(block[3 + 2 * z], planted.vy[z]);
            }
            let eta = action_code(&acts[i], &space.action_labels).unwrap();
            let ai = space.action_labels.binary_search(&planted.verb).unwrap();
            assert_eq!(eta.values[2 * ai], 1.0);
            let caps = &corpus.get(&planted.video_id).unwrap().captions;
            assert!((2..=3).contains(&caps.len()));
            assert!(caps.iter().all(|c| c.join(" ") == planted.caption));
        }
    }

    #[test]
    fn planted_quantities() {
        let ds = build(&SynthConfig::default()).unwrap();
        for v in &ds.manifest.videos {
            assert_eq!(v.fr, v.count as f64 / 10.0);
            for &x in &v.vx {
                assert!((x - 0.2).abs() < 1e-12);
            }
        }
        assert!(ds.manifest.videos.iter().any(|v| v.count == 2));
        assert!(ds.dictionary.len() <= 64);
    }

    #[test]
    fn ambiguous_pair() {
        let cfg = SynthConfig::default();
        let (a, b) = generate_ambiguous_pair(&cfg).unwrap();
        let (ma, mb) = (mean_pool(&a), mean_pool(&b));
        assert!(ma.iter().zip(&mb).all(|(x, y)| (x - y).abs() <= 1e-12));
        let hcfg = HftConfig::new(4).unwrap();
        let (ca, cb) = (encode_activations(&a, &hcfg).unwrap(), encode_activations(&b, &hcfg).unwrap());
        let l2: f64 = ca.values.iter().zip(&cb.values).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(l2 > 0.1);
        assert_eq!(generate_ambiguous_pair(&cfg).unwrap().1, b);
    }

    #[test]
    fn rejects_short_clips() {
        assert!(build(&SynthConfig {
            n_clips: 3,
            ..SynthConfig::default()
        })
        .is_err());
    }
}
