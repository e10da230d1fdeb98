//! Word embeddings with character n-gram synthesis for out-of-vocabulary words.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::ingest::Vocabulary;

pub const EMBED_DIM: usize = 300;
pub const DEFAULT_BUCKETS: usize = 4096;
const MIN_N: usize = 3;
const MAX_N: usize = 6;
const INIT_RANGE: f64 = 0.1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Character n-grams (n = 3..=6) of `<word>`, shortest first.
pub fn char_ngrams(word: &str) -> Vec<String> {
    let chars: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for n in MIN_N..=MAX_N.min(chars.len()) {
        out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// Trainable word vectors plus fixed n-gram bucket vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub word_vectors: Array2<f64>,
    pub ngram_buckets: Array2<f64>,
}

impl EmbeddingTable {
    /// Random buckets; each word row starts as the n-gram sum of its token.
    pub fn init(vocab: &Vocabulary, dim: usize, buckets: usize, rng: &mut impl Rng) -> Self {
        let ngram_buckets = Array2::from_shape_simple_fn((buckets.max(1), dim), || rng.gen_range(-INIT_RANGE..INIT_RANGE));
        let mut table = EmbeddingTable {
            word_vectors: Array2::zeros((vocab.len(), dim)),
            ngram_buckets,
        };
        for (i, tok) in vocab.tokens().iter().enumerate() {
            let v = table.ngram_vector(tok);
            table.word_vectors.row_mut(i).assign(&v);
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.word_vectors.ncols()
    }

    pub fn bucket(&self, ngram: &str) -> usize {
        (fnv1a64(ngram.as_bytes()) % self.ngram_buckets.nrows() as u64) as usize
    }

    /// Sum of the bucket vectors of every n-gram of `word`.
    pub fn ngram_vector(&self, word: &str) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim());
        for g in char_ngrams(word) {
            v += &self.ngram_buckets.row(self.bucket(&g));
        }
        v
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.word_vectors.row(index)
    }

    /// Vocabulary row for known words, n-gram synthesis otherwise.
    pub fn embed_word(&self, word: &str, vocab: &Vocabulary) -> Array1<f64> {
        match vocab.get(word) {
            Some(i) => self.row(i).to_owned(),
            None => self.ngram_vector(word),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn ngrams_of_short_word() {
        assert_eq!(char_ngrams("cat"), ["<ca", "cat", "at>", "<cat", "cat>", "<cat>"]);
        assert_eq!(char_ngrams("a"), ["<a>"]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn oov_synthesis() {
        let vocab = Vocabulary::from_content(["dog"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let table = EmbeddingTable::init(&vocab, 16, 97, &mut rng);
        let cat = table.embed_word("cat", &vocab);
        let mut expected = Array1::zeros(16);
        for g in ["<ca", "cat", "at>", "<cat", "cat>", "<cat>"] {
            expected += &table.ngram_buckets.row(table.bucket(g));
        }
        assert_eq!(cat, expected);
        assert_eq!(cat, table.embed_word("cat", &vocab));
        assert_eq!(table.embed_word("dog", &vocab), table.row(4).to_owned());
    }

    #[test]
    fn distinct_words_get_distinct_vectors() {
        let vocab = Vocabulary::from_content(Vec::<String>::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let table = EmbeddingTable::init(&vocab, 8, DEFAULT_BUCKETS, &mut rng);
        let mut seen = HashSet::new();
        for i in 0..1000 {
            let w = format!("w{i}x{}", i * 7919 % 1000);
            let key: Vec<u64> = table.embed_word(&w, &vocab).iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision for {w}");
        }
    }
}
