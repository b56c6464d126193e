//! Static word-vector tables, with optional character n-gram composition
//! for out-of-vocabulary words.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Reserved token for out-of-vocabulary lookups in vector files.
pub const UNK_TOKEN: &str = "<unk>";

/// Character n-gram inventory of a subword table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramTable {
    pub min_n: usize,
    pub max_n: usize,
    pub vectors: IndexMap<String, Vec<f64>>,
}

/// A word -> vector map with a designated UNK vector; subword tables also
/// carry an n-gram map so unseen words can be composed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEmbeddingTable {
    dim: usize,
    words: IndexMap<String, Vec<f64>>,
    ngrams: Option<NgramTable>,
    unk: Vec<f64>,
}

impl StaticEmbeddingTable {
    pub fn new(
        dim: usize,
        words: IndexMap<String, Vec<f64>>,
        ngrams: Option<NgramTable>,
        unk: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embedding("embedding dimension must be positive".into()));
        }
        if unk.len() != dim {
            return Err(Error::Embedding(format!(
                "UNK vector has dimension {}, table dimension is {dim}",
                unk.len()
            )));
        }
        for (word, vec) in &words {
            if vec.len() != dim {
                return Err(Error::Embedding(format!(
                    "vector for {word:?} has dimension {}, table dimension is {dim}",
                    vec.len()
                )));
            }
        }
        if let Some(ng) = &ngrams {
            if ng.min_n == 0 || ng.min_n > ng.max_n {
                return Err(Error::Embedding(format!(
                    "invalid n-gram range {}..={}",
                    ng.min_n, ng.max_n
                )));
            }
            for (gram, vec) in &ng.vectors {
                if vec.len() != dim {
                    return Err(Error::Embedding(format!(
                        "vector for n-gram {gram:?} has dimension {}, table dimension is {dim}",
                        vec.len()
                    )));
                }
            }
        }
        Ok(StaticEmbeddingTable {
            dim,
            words,
            ngrams,
            unk,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn has_ngrams(&self) -> bool {
        self.ngrams.is_some()
    }

    pub fn ngram_range(&self) -> Option<(usize, usize)> {
        self.ngrams.as_ref().map(|n| (n.min_n, n.max_n))
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.words.keys()
    }

    /// Vocabulary index of a word; 0 is the UNK sentinel, known words are
    /// numbered from 1 in table order.
    pub fn word_id(&self, word: &str) -> usize {
        self.words.get_index_of(word).map_or(0, |i| i + 1)
    }

    /// Vector for a word: the stored vector for vocabulary words, the mean
    /// of its known n-gram vectors for out-of-vocabulary words in a subword
    /// table, the UNK vector otherwise.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(vec) = self.words.get(word) {
            return vec.clone();
        }
        if let Some(ng) = &self.ngrams {
            let mut sum = vec![0.0; self.dim];
            let mut known = 0usize;
            for gram in extract_ngrams(word, ng.min_n, ng.max_n) {
                if let Some(vec) = ng.vectors.get(&gram) {
                    for (s, v) in sum.iter_mut().zip(vec) {
                        *s += v;
                    }
                    known += 1;
                }
            }
            if known > 0 {
                for s in &mut sum {
                    *s /= known as f64;
                }
                return sum;
            }
        }
        self.unk.clone()
    }

    /// Short description used in checkpoints for mismatch detection.
    pub fn identifier(&self, kind: &str) -> String {
        match &self.ngrams {
            Some(ng) => format!(
                "{kind}:d{}:v{}:ng{}-{}x{}",
                self.dim,
                self.words.len(),
                ng.min_n,
                ng.max_n,
                ng.vectors.len()
            ),
            None => format!("{kind}:d{}:v{}", self.dim, self.words.len()),
        }
    }

    /// Writes the word vectors in the text format `vocab_size dim` header
    /// followed by one `word v1 .. vd` line per word. N-gram vectors are not
    /// part of this format.
    pub fn save_word_vectors(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.words.len(), self.dim));
        for (word, vec) in &self.words {
            out.push_str(word);
            for v in vec {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads a word-vector file. When `expected_dim` is given, a differing
    /// file dimension is an error.
    pub fn load_word_vectors(
        path: impl AsRef<Path>,
        expected_dim: Option<usize>,
    ) -> Result<StaticEmbeddingTable> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = raw.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty vector file"))?;
        let mut parts = header.split_whitespace();
        let declared_size: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "header must be `vocab_size dim`"))?;
        let dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "header must be `vocab_size dim`"))?;
        if parts.next().is_some() {
            return Err(Error::parse(path, 1, "header must be `vocab_size dim`"));
        }
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(Error::Embedding(format!(
                    "vector file {} has dimension {dim}, expected {expected}",
                    path.display()
                )));
            }
        }
        let mut words = IndexMap::with_capacity(declared_size);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields
                .next()
                .ok_or_else(|| Error::parse(path, idx + 1, "missing word"))?
                .to_string();
            let vec: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
            let vec =
                vec.map_err(|e| Error::parse(path, idx + 1, format!("bad vector value: {e}")))?;
            if vec.len() != dim {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("vector has {} values, header declares {dim}", vec.len()),
                ));
            }
            if words.insert(word.clone(), vec).is_some() {
                return Err(Error::parse(path, idx + 1, format!("duplicate word {word:?}")));
            }
        }
        if words.len() != declared_size {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "header declares {declared_size} words, file contains {}",
                    words.len()
                ),
            ));
        }
        let unk = words
            .get(UNK_TOKEN)
            .cloned()
            .unwrap_or_else(|| vec![0.0; dim]);
        StaticEmbeddingTable::new(dim, words, None, unk)
    }
}

/// Character n-grams of the boundary-marked word `<w>`, lengths `min_n` to
/// `max_n`, in reading order; repeated substrings appear once per occurrence.
pub fn extract_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let bracketed: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in min_n..=max_n {
        if n > bracketed.len() {
            break;
        }
        for start in 0..=bracketed.len() - n {
            grams.push(bracketed[start..start + n].iter().collect());
        }
    }
    grams
}
