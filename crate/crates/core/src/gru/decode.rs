//! Greedy and beam-search caption decoding.

use super::model::{DecoderState, GruModel};
use crate::error::{Error, Result};
use crate::ingest::{BOS, EOS};

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Emits up to `max_len` tokens after `BOS`, stopping at `EOS` (not returned).
pub fn greedy_decode(model: &GruModel, upsilon: &[f64], max_len: usize) -> Result<Vec<usize>> {
    let mut state = DecoderState::new(model, upsilon)?;
    let mut out = Vec::new();
    let mut token = BOS;
    for _ in 0..max_len {
        let lp = state.step(model, token);
        token = argmax(lp.as_slice().expect("contiguous"));
        if token == EOS {
            break;
        }
        out.push(token);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, `EOS` excluded.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities, including `EOS` when finished.
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Steps taken, counting `EOS`.
    pub fn steps(&self) -> usize {
        self.tokens.len() + self.finished as usize
    }

    pub fn normalized(&self) -> f64 {
        self.log_prob / self.steps().max(1) as f64
    }
}

/// Beam search ranking partial hypotheses by cumulative log-probability.
/// Finished hypotheses stay in the beam unchanged. Returns the final beam,
/// best length-normalized score first.
pub fn beam_search(model: &GruModel, upsilon: &[f64], max_len: usize, beam: usize) -> Result<Vec<Hypothesis>> {
    if beam < 1 {
        return Err(Error::Argument("beam width must be at least 1".into()));
    }
    let start = DecoderState::new(model, upsilon)?;
    let mut live: Vec<(Hypothesis, DecoderState)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        start,
    )];
    for _ in 0..max_len {
        if live.iter().all(|(h, _)| h.finished) {
            break;
        }
        // (score, parent, token or None for a carried finished hypothesis)
        let mut candidates: Vec<(f64, usize, Option<usize>)> = Vec::new();
        let mut next_states: Vec<Option<DecoderState>> = Vec::with_capacity(live.len());
        let mut step_probs = Vec::with_capacity(live.len());
        for (pi, (hyp, state)) in live.iter().enumerate() {
            if hyp.finished {
                candidates.push((hyp.log_prob, pi, None));
                next_states.push(None);
                step_probs.push(None);
                continue;
            }
            let mut st = state.clone();
            let last = hyp.tokens.last().copied().unwrap_or(BOS);
            let lp = st.step(model, last);
            for (v, &l) in lp.iter().enumerate() {
                candidates.push((hyp.log_prob + l, pi, Some(v)));
            }
            next_states.push(Some(st));
            step_probs.push(Some(lp));
        }
        // stable: equal scores keep parent order, then token index
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        candidates.truncate(beam);
        live = candidates
            .into_iter()
            .map(|(score, pi, tok)| {
                let (parent, _) = &live[pi];
                match tok {
                    None => (parent.clone(), live[pi].1.clone()),
                    Some(v) => {
                        let mut h = parent.clone();
                        h.log_prob = score;
                        if v == EOS {
                            h.finished = true;
                        } else {
                            h.tokens.push(v);
                        }
                        (h, next_states[pi].clone().expect("live parent has a state"))
                    }
                }
            })
            .collect();
    }
    let mut out: Vec<Hypothesis> = live.into_iter().map(|(h, _)| h).collect();
    out.sort_by(|a, b| b.normalized().total_cmp(&a.normalized()));
    Ok(out)
}

pub fn beam_decode(model: &GruModel, upsilon: &[f64], max_len: usize, beam: usize) -> Result<Vec<usize>> {
    let hyps = beam_search(model, upsilon, max_len, beam)?;
    Ok(hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default())
}

/// Log-probability of emitting `tokens` after `BOS`, plus `EOS` if `with_eos`.
pub fn sequence_log_prob(model: &GruModel, upsilon: &[f64], tokens: &[usize], with_eos: bool) -> Result<f64> {
    let mut state = DecoderState::new(model, upsilon)?;
    let mut prev = BOS;
    let mut total = 0.0;
    for &t in tokens.iter().chain(with_eos.then_some(&EOS)) {
        if t >= model.vocab_size() {
            return Err(Error::Argument(format!("token index {t} outside vocabulary")));
        }
        total += state.step(model, prev)[t];
        prev = t;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::model::ModelConfig;
    use crate::ingest::Vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> (GruModel, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::from_content((0..8).map(|i| format!("w{i}"))).unwrap();
        let cfg = ModelConfig {
            state_size: 6,
            embed_dim: 5,
            ngram_buckets: 7,
            dropout: 0.0,
        };
        let mut m = GruModel::new(vocab, &cfg, &mut rng).unwrap();
        // sharper distributions than the default init
        m.params.out_w.mapv_inplace(|w| w * 6.0);
        m.params.out_b.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        let ups = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();
        (m, ups)
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..50 {
            let (m, u) = random_model(seed);
            assert_eq!(greedy_decode(&m, &u, 12).unwrap(), beam_decode(&m, &u, 12, 1).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn beam_finds_at_least_greedy_probability() {
        for seed in 0..50 {
            let (m, u) = random_model(seed);
            let g = greedy_decode(&m, &u, 12).unwrap();
            let finished = g.len() < 12;
            let g_lp = sequence_log_prob(&m, &u, &g, finished).unwrap();
            let hyps = beam_search(&m, &u, 12, 5).unwrap();
            let same_len: Vec<&Hypothesis> = hyps.iter().filter(|h| h.steps() == g.len() + finished as usize).collect();
            let best_any = hyps.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            if let Some(best) = same_len.iter().map(|h| h.log_prob).reduce(f64::max) {
                assert!(best >= g_lp - 1e-12, "seed {seed}");
            } else {
                assert!(best_any.is_finite());
            }
            for h in &hyps {
                let lp = sequence_log_prob(&m, &u, &h.tokens, h.finished).unwrap();
                assert!((lp - h.log_prob).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn respects_max_len_and_is_deterministic() {
        let (m, u) = random_model(3);
        let a = greedy_decode(&m, &u, 3).unwrap();
        assert!(a.len() <= 3);
        assert_eq!(a, greedy_decode(&m, &u, 3).unwrap());
        assert!(beam_decode(&m, &u, 3, 4).unwrap().len() <= 3);
        assert!(matches!(beam_decode(&m, &u, 3, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn finished_hypotheses_are_frozen() {
        // bias EOS so some hypotheses finish early
        let (mut m, u) = random_model(4);
        m.params.out_b[EOS] += 3.0;
        let hyps = beam_search(&m, &u, 10, 4).unwrap();
        for h in hyps.iter().filter(|h| h.finished) {
            assert!(!h.tokens.contains(&EOS));
            let lp = sequence_log_prob(&m, &u, &h.tokens, true).unwrap();
            assert!((lp - h.log_prob).abs() < 1e-9);
        }
        assert!(hyps.iter().any(|h| h.finished));
    }
}
