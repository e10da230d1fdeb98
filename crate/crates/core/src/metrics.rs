//! Corpus caption metrics: BLEU-4, ROUGE-L and CIDEr-D over tokenized text.
//! Maps are ordered so every sum runs in the same order on every run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CaptionCorpus, Prediction};

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_SCALE: f64 = 10.0;
const MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub video_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub bleu4: f64,
    pub rougel: f64,
    pub ciderd: f64,
}

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn check(pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Argument("no caption pairs to score".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.references.is_empty()) {
        return Err(Error::Argument(format!("video '{}' has no references", p.video_id)));
    }
    Ok(())
}

/// Corpus BLEU-4 without smoothing; brevity uses the closest reference length, ties to the shorter.
pub fn bleu4(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let (mut c, mut r) = (0usize, 0usize);
    for p in pairs {
        let len = p.candidate.len();
        c += len;
        r += p
            .references
            .iter()
            .map(|x| x.len())
            .min_by_key(|&l| (l.abs_diff(len), l))
            .expect("references checked");
        for n in 1..=MAX_N {
            let cand = ngrams(&p.candidate, n);
            let mut max_ref: Counts = BTreeMap::new();
            for reference in &p.references {
                for (g, k) in ngrams(reference, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in cand {
                matched[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    if c == 0 || matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..MAX_N)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / MAX_N as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_p.exp())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn rouge_pair(candidate: &[String], reference: &[String]) -> f64 {
    let l = lcs_len(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let r = l / reference.len() as f64;
    let p = l / candidate.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// Mean over pairs of the best F-measure against any reference.
pub fn rouge_l(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| rouge_pair(&p.candidate, r))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(sum / pairs.len() as f64)
}

struct TfIdf {
    vecs: Vec<BTreeMap<Vec<String>, f64>>,
    norms: [f64; MAX_N],
    len: usize,
}

fn tfidf(tokens: &[String], df: &BTreeMap<Vec<String>, f64>, log_docs: f64) -> TfIdf {
    let mut vecs = Vec::with_capacity(MAX_N);
    let mut norms = [0.0; MAX_N];
    for n in 1..=MAX_N {
        let v: BTreeMap<Vec<String>, f64> = ngrams(tokens, n)
            .into_iter()
            .map(|(g, k)| {
                let d = df.get(g).copied().unwrap_or(0.0).max(1.0);
                (g.to_vec(), k as f64 * (log_docs - d.ln()))
            })
            .collect();
        norms[n - 1] = v.values().map(|x| x * x).sum::<f64>().sqrt();
        vecs.push(v);
    }
    TfIdf {
        vecs,
        norms,
        len: tokens.len(),
    }
}

fn cider_sim(h: &TfIdf, r: &TfIdf) -> f64 {
    let delta = h.len as f64 - r.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..MAX_N {
        let mut dot = 0.0;
        for (g, &vh) in &h.vecs[n] {
            if let Some(&vr) = r.vecs[n].get(g) {
                dot += vh.min(vr) * vr;
            }
        }
        if h.norms[n] != 0.0 && r.norms[n] != 0.0 {
            total += penalty * dot / (h.norms[n] * r.norms[n]);
        }
    }
    total / MAX_N as f64
}

/// CIDEr-D with document frequencies counted over each video's reference set.
pub fn cider_d(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let mut df: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for p in pairs {
        let mut seen: BTreeSet<&[String]> = BTreeSet::new();
        for r in &p.references {
            for n in 1..=MAX_N {
                seen.extend(ngrams(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    let log_docs = (pairs.len() as f64).ln();
    let mut sum = 0.0;
    for p in pairs {
        let h = tfidf(&p.candidate, &df, log_docs);
        let per_ref: f64 = p
            .references
            .iter()
            .map(|r| cider_sim(&h, &tfidf(r, &df, log_docs)))
            .sum();
        sum += CIDER_SCALE * per_ref / p.references.len() as f64;
    }
    Ok(sum / pairs.len() as f64)
}

pub fn score_all(pairs: &[EvalPair]) -> Result<Scores> {
    Ok(Scores {
        bleu4: bleu4(pairs)?,
        rougel: rouge_l(pairs)?,
        ciderd: cider_d(pairs)?,
    })
}

/// Joins predictions with references by video id. Predictions are tokenized
/// the same way as the corpus; every predicted video must have references.
pub fn pair_up(predictions: &[Prediction], references: &CaptionCorpus) -> Result<Vec<EvalPair>> {
    let missing: Vec<String> = predictions
        .iter()
        .filter(|p| references.get(&p.video_id).is_none())
        .map(|p| p.video_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVideos(missing));
    }
    let mut seen = BTreeSet::new();
    predictions
        .iter()
        .map(|p| {
            if !seen.insert(p.video_id.as_str()) {
                return Err(Error::Argument(format!("duplicate prediction for '{}'", p.video_id)));
            }
            Ok(EvalPair {
                video_id: p.video_id.clone(),
                candidate: crate::ingest::tokenize(&p.caption),
                references: references.get(&p.video_id).expect("checked").captions.clone(),
            })
        })
        .collect()
}
