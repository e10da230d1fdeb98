//! End-to-end stages over on-disk datasets: encode, train, caption, eval.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::{concat_code, make_projection, CodeLayout, CodeManifest, FixedProjection, VisualCode};
use crate::gru::checkpoint::save_checkpoint;
use crate::gru::train::{loss_csv, seeded_rng, INIT_STREAM};
use crate::gru::{beam_decode, build_samples, greedy_decode, load_checkpoint, train, EpochReport, GruModel};
use crate::hft::encode_activations;
use crate::ingest::{
    build_vocab, read_actions, read_corpus, read_detections, read_predictions, read_raw, read_tensor, write_jsonl,
    write_raw, ActionDistribution, ActivationSeries, DetectionSet, Prediction, RawTensor, Source, Vocabulary,
};
use crate::metrics::{pair_up, score_all, Scores};
use crate::semantic::{action_code, object_code, LabelSpace};

pub const CODE_EXT: &str = "code";
pub const TENSOR_EXT: &str = "tensor";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const LOSS_LOG: &str = "loss.csv";

/// Paths of the encoder inputs. Activation inputs are directories of
/// `<video_id>.tensor` files.
#[derive(Debug, Clone)]
pub struct EncodeInputs {
    pub activations_2d: PathBuf,
    pub activations_3d: PathBuf,
    pub detections: PathBuf,
    pub actions: Option<PathBuf>,
    pub dictionary: PathBuf,
}

/// Encoder inputs loaded into memory.
#[derive(Debug, Clone)]
pub struct EncodeData {
    pub frames2d: Vec<ActivationSeries>,
    pub clips3d: Vec<ActivationSeries>,
    pub detections: Vec<DetectionSet>,
    pub actions: Option<Vec<ActionDistribution>>,
    pub dictionary: Vocabulary,
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Argument(format!("{}: no .{ext} files", dir.display())));
    }
    Ok(out)
}

/// Reads every `.tensor` file of a directory, sorted by video id.
pub fn read_activation_dir(dir: &Path, source: Source) -> Result<Vec<ActivationSeries>> {
    let mut out = Vec::new();
    for path in files_with_ext(dir, TENSOR_EXT)? {
        let s = read_tensor(&path)?;
        if s.source != source {
            return Err(Error::Argument(format!(
                "{}: holds {:?} activations, expected {source:?}",
                path.display(),
                s.source
            )));
        }
        out.push(s);
    }
    Ok(out)
}

impl EncodeData {
    pub fn load(inputs: &EncodeInputs) -> Result<Self> {
        Ok(EncodeData {
            frames2d: read_activation_dir(&inputs.activations_2d, Source::Frame2d)?,
            clips3d: read_activation_dir(&inputs.activations_3d, Source::Clip3d)?,
            detections: read_detections(&inputs.detections)?,
            actions: inputs.actions.as_deref().map(read_actions).transpose()?,
            dictionary: Vocabulary::read(&inputs.dictionary)?,
        })
    }
}

fn common_width(series: &[ActivationSeries], what: &'static str) -> Result<usize> {
    let w = series.first().map_or(0, |s| s.neurons);
    for s in series {
        if s.neurons != w {
            return Err(Error::Argument(format!(
                "{what} activations of '{}' have {} neurons, others have {w}",
                s.video_id, s.neurons
            )));
        }
    }
    Ok(w)
}

fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<BTreeSet<&'a str>> {
    let mut set = BTreeSet::new();
    for id in ids {
        if !set.insert(id) {
            return Err(Error::Argument(format!("video '{id}' appears twice in {what}")));
        }
    }
    Ok(set)
}

/// Encodes every video; codes come back sorted by video id.
pub fn encode_dataset(data: &EncodeData, cfg: &PipelineConfig) -> Result<(CodeManifest, Vec<VisualCode>)> {
    cfg.validate()?;
    let f2 = unique_ids(data.frames2d.iter().map(|s| s.video_id.as_str()), "2D activations")?;
    let f3 = unique_ids(data.clips3d.iter().map(|s| s.video_id.as_str()), "3D activations")?;
    let dt = unique_ids(data.detections.iter().map(|s| s.video_id.as_str()), "detections")?;
    let ac = data
        .actions
        .as_ref()
        .map(|a| unique_ids(a.iter().map(|x| x.video_id.as_str()), "actions"))
        .transpose()?;
    let mut sources = vec![("activations-2d", &f2), ("activations-3d", &f3), ("detections", &dt)];
    if let Some(ac) = &ac {
        sources.push(("actions", ac));
    }
    let all: BTreeSet<&str> = sources.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let mut missing = Vec::new();
    for id in &all {
        let absent: Vec<&str> = sources.iter().filter(|(_, s)| !s.contains(id)).map(|(n, _)| *n).collect();
        if !absent.is_empty() {
            missing.push(format!("{id} (no {})", absent.join(", ")));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingVideos(missing));
    }

    let m = common_width(&data.frames2d, "2D")?;
    let k = common_width(&data.clips3d, "3D")?;
    let no_actions = Vec::new();
    let actions = data.actions.as_ref().unwrap_or(&no_actions);
    let space = LabelSpace::from_outputs(&data.detections, actions, &data.dictionary);
    let ocfg = cfg.objects();
    let layout = CodeLayout {
        p: cfg.p,
        m,
        k,
        objects: space.object_labels.len(),
        object_block: ocfg.block_len(),
        actions: if data.actions.is_some() { space.action_labels.len() } else { 0 },
    };
    let d = layout.dim();
    let proj = make_projection(d, cfg.projection_dim, cfg.projection_seed)?;

    let by_id_3d: BTreeMap<&str, &ActivationSeries> = data.clips3d.iter().map(|s| (s.video_id.as_str(), s)).collect();
    let by_id_dt: BTreeMap<&str, &DetectionSet> = data.detections.iter().map(|s| (s.video_id.as_str(), s)).collect();
    let by_id_ac: BTreeMap<&str, &ActionDistribution> = actions.iter().map(|s| (s.video_id.as_str(), s)).collect();
    let mut frames2d: Vec<&ActivationSeries> = data.frames2d.iter().collect();
    frames2d.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let codes = frames2d
        .par_iter()
        .map(|s2| {
            let id = s2.video_id.as_str();
            encode_video(s2, by_id_3d[id], by_id_dt[id], by_id_ac.get(id).copied(), &space, &layout, &proj, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = CodeManifest {
        layout,
        d,
        projection_dim: cfg.projection_dim,
        projection_seed: cfg.projection_seed,
        q: ocfg.q,
        max_objects: ocfg.max_objects,
        has_actions: data.actions.is_some(),
        object_labels: space.object_labels,
        action_labels: if data.actions.is_some() { space.action_labels } else { Vec::new() },
        videos: codes.iter().map(|c| c.video_id.clone()).collect(),
    };
    Ok((manifest, codes))
}

#[allow(clippy::too_many_arguments)]
fn encode_video(
    s2: &ActivationSeries,
    s3: &ActivationSeries,
    dets: &DetectionSet,
    acts: Option<&ActionDistribution>,
    space: &LabelSpace,
    layout: &CodeLayout,
    proj: &FixedProjection,
    cfg: &PipelineConfig,
) -> Result<VisualCode> {
    let hcfg = cfg.hft();
    let alpha = encode_activations(s2, &hcfg)?;
    let beta = encode_activations(s3, &hcfg)?;
    let gamma = object_code(dets, s2.steps, &space.object_labels, cfg.objects())?;
    let eta = match acts {
        Some(a) => action_code(a, &space.action_labels)
            .map_err(|e| Error::Argument(format!("actions of '{}': {e}", a.video_id)))?
            .values,
        None => Vec::new(),
    };
    let v = concat_code(layout, &alpha.values, &beta.values, &gamma.values, &eta)?;
    let upsilon = proj.project(&v)?;
    Ok(VisualCode {
        video_id: s2.video_id.clone(),
        v,
        upsilon,
    })
}

/// Writes `<dir>/<video_id>.code` (one-row tensor of υ) and `<dir>/manifest.json`.
pub fn write_codes(dir: &Path, manifest: &CodeManifest, codes: &[VisualCode]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in codes {
        // the source tag carries no meaning for fused codes
        let raw = RawTensor::row_vector(Source::Frame2d, c.upsilon.iter().map(|&x| x as f32).collect());
        write_raw(&raw, dir.join(format!("{}.{CODE_EXT}", c.video_id)))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn encode_to_dir(inputs: &EncodeInputs, cfg: &PipelineConfig, out: &Path) -> Result<CodeManifest> {
    let data = EncodeData::load(inputs)?;
    let (manifest, codes) = encode_dataset(&data, cfg)?;
    write_codes(out, &manifest, &codes)?;
    Ok(manifest)
}

/// Reads every `.code` file of a directory into `video_id -> upsilon`.
pub fn read_codes(dir: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for path in files_with_ext(dir, CODE_EXT)? {
        let raw = read_raw(&path)?;
        if raw.rows != 1 {
            return Err(Error::format(&path, 12, format!("code file has {} rows, expected 1", raw.rows)));
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        out.insert(id, raw.values.iter().map(|&x| x as f64).collect());
    }
    Ok(out)
}

/// Trains on `corpus` against the codes in `codes_dir`, writing
/// `epoch_NNN.ckpt` after every epoch, `model.ckpt` and `loss.csv` into `out`.
pub fn train_from_dir(codes_dir: &Path, corpus: &Path, cfg: &PipelineConfig, out: &Path) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    let corpus = read_corpus(corpus)?;
    let codes = read_codes(codes_dir)?;
    let vocab = build_vocab(&corpus, cfg.vocab_size)?;
    let mut model = GruModel::new(vocab, &cfg.model(), &mut seeded_rng(cfg.train_seed, INIT_STREAM))?;
    let codes: std::collections::HashMap<String, Vec<f64>> = codes.into_iter().collect();
    let samples = build_samples(&corpus, &codes, &model, cfg.max_len)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let tcfg = cfg.train();
    let mut log = Vec::new();
    let reports = train(&mut model, &samples, &tcfg, |rep, m| {
        save_checkpoint(out.join(format!("epoch_{:03}.ckpt", rep.epoch)), m, &tcfg, rep.epoch)?;
        log.push(*rep);
        let path = out.join(LOSS_LOG);
        fs::write(&path, loss_csv(&log)).map_err(|e| Error::io(&path, e))
    })?;
    save_checkpoint(out.join(FINAL_CHECKPOINT), &model, &tcfg, reports.len())?;
    Ok(reports)
}

/// Decodes one caption; `beam == 1` is greedy.
pub fn caption_one(model: &GruModel, upsilon: &[f64], max_len: usize, beam: usize) -> Result<String> {
    let steps = max_len.saturating_sub(1).max(1);
    let tokens = if beam == 1 {
        greedy_decode(model, upsilon, steps)?
    } else {
        beam_decode(model, upsilon, steps, beam)?
    };
    Ok(model.vocab.decode(&tokens).join(" "))
}

/// Captions every code in `codes_dir` and writes predictions sorted by video id.
pub fn caption_dir(ckpt: &Path, codes_dir: &Path, beam: usize, out: &Path) -> Result<Vec<Prediction>> {
    if beam < 1 {
        return Err(Error::Argument("beam width must be at least 1".into()));
    }
    let ck = load_checkpoint(ckpt)?;
    let codes = read_codes(codes_dir)?;
    let codes: Vec<(String, Vec<f64>)> = codes.into_iter().collect();
    let preds = codes
        .par_iter()
        .map(|(id, u)| {
            Ok(Prediction {
                video_id: id.clone(),
                caption: caption_one(&ck.model, u, ck.train.max_len, beam)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&preds, out)?;
    Ok(preds)
}

pub fn eval_files(predictions: &Path, references: &Path) -> Result<Scores> {
    let preds = read_predictions(predictions)?;
    let refs = read_corpus(references)?;
    score_all(&pair_up(&preds, &refs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn desk_config() -> PipelineConfig {
        PipelineConfig {
            projection_dim: 16,
            state_size: 16,
            embed_dim: 8,
            ngram_buckets: 32,
            epochs: 2,
            batch: 8,
            ..PipelineConfig::default()
        }
    }

    fn inputs(dir: &Path, actions: bool) -> EncodeInputs {
        EncodeInputs {
            activations_2d: dir.join("activations2d"),
            activations_3d: dir.join("activations3d"),
            detections: dir.join("detections.jsonl"),
            actions: actions.then(|| dir.join("actions.jsonl")),
            dictionary: dir.join("dictionary.txt"),
        }
    }

    #[test]
    fn encode_layout_and_degraded_mode() {
        let data = tempfile::tempdir().unwrap();
        generate(&SynthConfig::default(), data.path()).unwrap();
        let cfg = desk_config();
        let full = encode_to_dir(&inputs(data.path(), true), &cfg, &data.path().join("codes")).unwrap();
        assert_eq!(full.videos.len(), 20);
        assert_eq!(full.d, 7 * 4 * (12 + 8) + 10 * full.object_labels.len() + 2 * full.action_labels.len());
        assert_eq!(full.action_labels.len(), 4);
        let no_act = encode_to_dir(&inputs(data.path(), false), &cfg, &data.path().join("codes2")).unwrap();
        assert_eq!(no_act.d, full.d - 2 * full.action_labels.len());
        assert!(!no_act.has_actions);
        let codes = read_codes(&data.path().join("codes")).unwrap();
        assert_eq!(codes.len(), 20);
        assert!(codes.values().all(|u| u.len() == 16 && u.iter().all(|x| x.abs() < 1.0)));
    }

    #[test]
    fn missing_video_is_listed() {
        let data = tempfile::tempdir().unwrap();
        generate(&SynthConfig::default(), data.path()).unwrap();
        fs::remove_file(data.path().join("activations3d/video07.tensor")).unwrap();
        match encode_to_dir(&inputs(data.path(), true), &desk_config(), &data.path().join("codes")) {
            Err(Error::MissingVideos(v)) => assert_eq!(v, ["video07 (no activations-3d)"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn train_caption_eval_round() {
        let data = tempfile::tempdir().unwrap();
        generate(&SynthConfig::default(), data.path()).unwrap();
        let cfg = desk_config();
        let codes = data.path().join("codes");
        encode_to_dir(&inputs(data.path(), true), &cfg, &codes).unwrap();
        let ck = data.path().join("ckpt");
        let reports = train_from_dir(&codes, &data.path().join("corpus.jsonl"), &cfg, &ck).unwrap();
        assert_eq!(reports.len(), 2);
        for f in ["epoch_001.ckpt", "epoch_002.ckpt", FINAL_CHECKPOINT, LOSS_LOG] {
            assert!(ck.join(f).is_file(), "{f}");
        }
        assert_eq!(fs::read(ck.join("epoch_002.ckpt")).unwrap(), fs::read(ck.join(FINAL_CHECKPOINT)).unwrap());
        let preds = data.path().join("pred.jsonl");
        let p = caption_dir(&ck.join(FINAL_CHECKPOINT), &codes, 2, &preds).unwrap();
        assert_eq!(p.len(), 20);
        let s = eval_files(&preds, &data.path().join("corpus.jsonl")).unwrap();
        assert!((0.0..=1.0).contains(&s.bleu4));

        fs::remove_file(codes.join("video03.code")).unwrap();
        match train_from_dir(&codes, &data.path().join("corpus.jsonl"), &cfg, &ck) {
            Err(Error::MissingVideos(v)) => assert_eq!(v, ["video03"]),
            other => panic!("{other:?}"),
        }
    }
}
