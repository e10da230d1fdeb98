//! Caption normalization, vocabularies and index encoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::records::CaptionCorpus;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases and strips punctuation. Apostrophes survive only between two
/// alphanumeric characters ("someone's"); everything else that is not
/// alphanumeric becomes a separator.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence.to_lowercase().chars().collect();
    let mut cleaned = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || (c == '\''
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        cleaned.push(if keep { c } else { ' ' });
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Token dictionary with the four reserved entries at fixed indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from content tokens; the reserved tokens are prepended.
    pub fn from_content<I, S>(content: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(content.into_iter().map(Into::into))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Takes a full token list, reserved tokens included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::Argument(format!(
                "vocabulary must start with {}",
                RESERVED.join(", ")
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    /// Maps indices back to words, dropping reserved tokens.
    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .filter(|&&i| i >= RESERVED.len() && i < self.len())
            .map(|&i| self.tokens[i].clone())
            .collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_owned).collect();
        if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
            return Err(Error::record(path, i + 1, "empty token"));
        }
        Self::from_tokens(tokens).map_err(|e| Error::record(path, 1, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.tokens.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Keeps the `max_size - 4` most frequent tokens; equal counts are ordered lexicographically.
pub fn build_vocab(corpus: &CaptionCorpus, max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED.len() {
        return Err(Error::Argument(format!(
            "vocabulary size {max_size} cannot hold the reserved tokens"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for caption in corpus.captions() {
        for t in caption {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocabulary::from_content(ranked.into_iter().map(|(t, _)| t))
}

/// `BOS w1 .. wn EOS PAD..` of exactly `max_len` indices; content is truncated to `max_len - 2`.
pub fn encode_caption<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 3 {
        return Err(Error::Argument(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut out = Vec::with_capacity(max_len);
    out.push(BOS);
    out.extend(
        tokens
            .iter()
            .take(max_len - 2)
            .map(|t| vocab.index_or_unk(t.as_ref())),
    );
    out.push(EOS);
    out.resize(max_len, PAD);
    Ok(out)
}
