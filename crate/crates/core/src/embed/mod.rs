//! Tokenise-and-embed abstraction over the three backend families: a
//! word-level static table, a subword static table (character n-grams), and
//! a contextual encoder.

mod contextual;
mod sgns;
mod table;

use std::fmt;
use std::path::Path;

use ndarray::s;
use serde::{Deserialize, Serialize};

pub use contextual::{ContextualEncoder, EncoderConfig, CLS_TOKEN, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN};
pub use sgns::{train_static_table, SgnsConfig};
pub use table::{extract_ngrams, NgramTable, StaticEmbeddingTable};

use crate::corpus::LabeledCorpus;
use crate::error::Error;
use crate::nn::Mat;
use crate::text;
use crate::{Result, MAX_SEQUENCE_LEN};

/// The three backend families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    WordStatic,
    SubwordStatic,
    Contextual,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [
        BackendKind::WordStatic,
        BackendKind::SubwordStatic,
        BackendKind::Contextual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::WordStatic => "word_static",
            BackendKind::SubwordStatic => "subword_static",
            BackendKind::Contextual => "contextual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "word_static" => Some(BackendKind::WordStatic),
            "subword_static" => Some(BackendKind::SubwordStatic),
            "contextual" => Some(BackendKind::Contextual),
            _ => None,
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A tokenised text: surface tokens, vocabulary ids and a validity mask.
///
/// Padding, when present, is a suffix: the mask is a prefix of ones followed
/// by zeros. Sequences are at most [`MAX_SEQUENCE_LEN`] positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<String>,
    ids: Vec<usize>,
    mask: Vec<bool>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, ids: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        if tokens.len() != ids.len() || tokens.len() != mask.len() {
            return Err(Error::Shape(format!(
                "token/ids/mask lengths differ: {}/{}/{}",
                tokens.len(),
                ids.len(),
                mask.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::Validation("empty token sequence".into()));
        }
        if tokens.len() > MAX_SEQUENCE_LEN {
            return Err(Error::Shape(format!(
                "sequence of {} positions exceeds {MAX_SEQUENCE_LEN}",
                tokens.len()
            )));
        }
        let real = mask.iter().take_while(|&&m| m).count();
        if mask[real..].iter().any(|&m| m) || real == 0 {
            return Err(Error::Shape(
                "mask must be a non-empty prefix of ones followed by zeros".into(),
            ));
        }
        Ok(TokenSequence { tokens, ids, mask })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Total positions including padding.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Count of real (unpadded) positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    /// Copy extended with trailing padding positions up to `total`.
    pub fn padded_to(&self, total: usize) -> Result<Self> {
        if total < self.len() || total > MAX_SEQUENCE_LEN {
            return Err(Error::Shape(format!(
                "cannot pad length {} to {total}",
                self.len()
            )));
        }
        let mut tokens = self.tokens.clone();
        let mut ids = self.ids.clone();
        let mut mask = self.mask.clone();
        while tokens.len() < total {
            tokens.push(PAD_TOKEN.to_string());
            ids.push(0);
            mask.push(false);
        }
        TokenSequence::new(tokens, ids, mask)
    }
}

/// Per-position embedding matrix with the sequence mask. Rows at padded
/// positions are all zero; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSequence {
    matrix: Mat,
    mask: Vec<bool>,
}

impl EmbeddedSequence {
    pub fn new(matrix: Mat, mask: Vec<bool>) -> Result<Self> {
        if matrix.nrows() != mask.len() {
            return Err(Error::Shape(format!(
                "matrix has {} rows, mask {} positions",
                matrix.nrows(),
                mask.len()
            )));
        }
        if matrix.nrows() == 0 || matrix.nrows() > MAX_SEQUENCE_LEN {
            return Err(Error::Shape(format!(
                "sequence of {} positions out of range",
                matrix.nrows()
            )));
        }
        let real = mask.iter().take_while(|&&m| m).count();
        if mask[real..].iter().any(|&m| m) || real == 0 {
            return Err(Error::Shape(
                "mask must be a non-empty prefix of ones followed by zeros".into(),
            ));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "embedded sequence".into(),
            });
        }
        for (row, &m) in matrix.outer_iter().zip(&mask) {
            if !m && row.iter().any(|&v| v != 0.0) {
                return Err(Error::Shape("padded rows must be zero".into()));
            }
        }
        Ok(EmbeddedSequence { matrix, mask })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// The rows of real positions only.
    pub fn real_rows(&self) -> Mat {
        self.matrix.slice(s![..self.real_len(), ..]).to_owned()
    }

    /// Copy extended with zero rows up to `total` positions.
    pub fn padded_to(&self, total: usize) -> Result<Self> {
        if total < self.matrix.nrows() || total > MAX_SEQUENCE_LEN {
            return Err(Error::Shape(format!(
                "cannot pad {} rows to {total}",
                self.matrix.nrows()
            )));
        }
        let mut matrix = Mat::zeros((total, self.matrix.ncols()));
        matrix
            .slice_mut(s![..self.matrix.nrows(), ..])
            .assign(&self.matrix);
        let mut mask = self.mask.clone();
        mask.resize(total, false);
        EmbeddedSequence::new(matrix, mask)
    }
}

/// One of the three embedding backends, owning its vocabulary and weights.
#[derive(Debug, Clone)]
pub enum EmbeddingBackend {
    WordStatic(StaticEmbeddingTable),
    SubwordStatic(StaticEmbeddingTable),
    Contextual(ContextualEncoder),
}

impl EmbeddingBackend {
    pub fn kind(&self) -> BackendKind {
        match self {
            EmbeddingBackend::WordStatic(_) => BackendKind::WordStatic,
            EmbeddingBackend::SubwordStatic(_) => BackendKind::SubwordStatic,
            EmbeddingBackend::Contextual(_) => BackendKind::Contextual,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            EmbeddingBackend::WordStatic(t) | EmbeddingBackend::SubwordStatic(t) => t.dim(),
            EmbeddingBackend::Contextual(e) => e.dim(),
        }
    }

    /// Identifier recorded in checkpoints; mismatches are load errors.
    pub fn identifier(&self) -> String {
        match self {
            EmbeddingBackend::WordStatic(t) => t.identifier("word_static"),
            EmbeddingBackend::SubwordStatic(t) => t.identifier("subword_static"),
            EmbeddingBackend::Contextual(e) => e.identifier(),
        }
    }

    /// Tokenises non-empty text; static backends split on whitespace and
    /// punctuation, the contextual backend applies its subword tokenizer
    /// with boundary tokens. Longer-than-128 inputs are tail-truncated.
    pub fn tokenize(&self, raw: &str) -> Result<TokenSequence> {
        match self {
            EmbeddingBackend::WordStatic(table) | EmbeddingBackend::SubwordStatic(table) => {
                if raw.trim().is_empty() {
                    return Err(Error::Validation("cannot tokenize empty text".into()));
                }
                let mut tokens = text::word_tokens(raw);
                tokens.truncate(MAX_SEQUENCE_LEN);
                let ids = tokens.iter().map(|t| table.word_id(t)).collect();
                let mask = vec![true; tokens.len()];
                TokenSequence::new(tokens, ids, mask)
            }
            EmbeddingBackend::Contextual(encoder) => encoder.tokenize(raw),
        }
    }

    /// Embeds a token sequence produced by this backend's `tokenize`.
    /// Static rows depend only on the token; contextual rows depend on the
    /// whole sentence. Padded positions embed to zero rows.
    pub fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedSequence> {
        let real = seq.real_len();
        let mut matrix = Mat::zeros((seq.len(), self.dimension()));
        match self {
            EmbeddingBackend::WordStatic(table) | EmbeddingBackend::SubwordStatic(table) => {
                for (row, token) in seq.tokens().iter().take(real).enumerate() {
                    let vec = table.lookup(token);
                    for (c, v) in vec.into_iter().enumerate() {
                        matrix[(row, c)] = v;
                    }
                }
            }
            EmbeddingBackend::Contextual(encoder) => {
                let real_ids = &seq.ids()[..real];
                let rows = encoder.embed_ids(real_ids);
                matrix.slice_mut(s![..real, ..]).assign(&rows);
            }
        }
        EmbeddedSequence::new(matrix, seq.mask().to_vec())
    }

    /// Convenience: tokenize then embed.
    pub fn embed_text(&self, raw: &str) -> Result<EmbeddedSequence> {
        let seq = self.tokenize(raw)?;
        self.embed(&seq)
    }
}

/// Where a static table comes from.
pub enum TableSource<'a> {
    TrainOnCorpus(&'a LabeledCorpus),
    LoadFromFile(&'a Path),
}

/// Builds a static embedding table by training on a corpus or loading a
/// vector file. `cfg.subword` selects the subword variant when training;
/// vector files carry word vectors only.
pub fn acquire_static_table(
    source: TableSource<'_>,
    cfg: &SgnsConfig,
) -> Result<StaticEmbeddingTable> {
    match source {
        TableSource::TrainOnCorpus(corpus) => {
            if corpus.is_empty() {
                return Err(Error::Embedding(
                    "cannot train embeddings on an empty corpus".into(),
                ));
            }
            let sentences: Vec<Vec<String>> = corpus
                .entries()
                .iter()
                .map(|e| text::word_tokens(&e.text))
                .collect();
            train_static_table(&sentences, cfg)
        }
        TableSource::LoadFromFile(path) => {
            StaticEmbeddingTable::load_word_vectors(path, Some(cfg.dim))
        }
    }
}
