//! Contextual embedding backend: a subword (WordPiece-style) tokenizer and
//! a small transformer encoder whose output rows depend on the whole
//! sentence. The encoder loads from a self-describing checkpoint and can be
//! fine-tuned through the autodiff tape or kept frozen.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::TokenSequence;
use crate::error::Error;
use crate::nn::{uniform_fan_in, uniform_row_vectors, Bindings, Graph, Mat, ParamStore, Var};
use crate::text;
use crate::{Result, MAX_SEQUENCE_LEN};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN];
const UNK_ID: usize = 1;
const CLS_ID: usize = 2;
const SEP_ID: usize = 3;

const LAYER_NORM_EPS: f64 = 1e-5;
const CHECKPOINT_VERSION: u32 = 1;

/// Architecture of the encoder; `dim` must be divisible by `heads`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.ff_dim == 0 {
            return Err(Error::Embedding(
                "encoder dim, layers, heads and ff_dim must be positive".into(),
            ));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Embedding(format!(
                "encoder dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Subword tokenizer plus transformer encoder with its own parameters.
#[derive(Debug, Clone)]
pub struct ContextualEncoder {
    cfg: EncoderConfig,
    vocab: Vec<String>,
    lookup: HashMap<String, usize>,
    params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct EncoderCheckpoint {
    version: u32,
    config: EncoderConfig,
    vocab: Vec<String>,
    params: crate::nn::SerializableParams,
}

impl ContextualEncoder {
    /// Randomly initialised encoder over the given subword pieces. The four
    /// special tokens are prepended automatically.
    pub fn random_init(pieces: Vec<String>, cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for piece in pieces {
            if piece.is_empty() || SPECIALS.contains(&piece.as_str()) {
                continue;
            }
            vocab.push(piece);
        }
        let mut lookup = HashMap::with_capacity(vocab.len());
        for (idx, piece) in vocab.iter().enumerate() {
            if lookup.insert(piece.clone(), idx).is_some() {
                return Err(Error::Embedding(format!("duplicate subword piece {piece:?}")));
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = init_params(&cfg, vocab.len(), &mut rng);
        Ok(ContextualEncoder {
            cfg,
            vocab,
            lookup,
            params,
        })
    }

    /// Rebuilds an encoder from stored architecture, vocabulary and weights
    /// (e.g. out of a model checkpoint). Shapes are validated against the
    /// architecture.
    pub fn from_parts(cfg: EncoderConfig, vocab: Vec<String>, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        if vocab.len() < SPECIALS.len() || vocab[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Checkpoint(
                "encoder vocabulary must start with the four special tokens".into(),
            ));
        }
        let mut lookup = HashMap::with_capacity(vocab.len());
        for (idx, piece) in vocab.iter().enumerate() {
            if lookup.insert(piece.clone(), idx).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocab piece {piece:?}")));
            }
        }
        let expected = init_params(&cfg, vocab.len(), &mut ChaCha20Rng::seed_from_u64(0));
        for (name, mat) in expected.iter() {
            if !params.contains(name) {
                return Err(Error::Checkpoint(format!("missing encoder parameter {name:?}")));
            }
            if params.get(name).dim() != mat.dim() {
                return Err(Error::Checkpoint(format!(
                    "encoder parameter {name:?} has shape {:?}, expected {:?}",
                    params.get(name).dim(),
                    mat.dim()
                )));
            }
        }
        Ok(ContextualEncoder {
            cfg,
            vocab,
            lookup,
            params,
        })
    }

    /// Subword inventory from tokenised sentences: every word plus every
    /// character (as both a word-initial and a continuation piece), so any
    /// in-vocabulary word is one piece and unseen words decompose to
    /// characters.
    pub fn pieces_from_sentences(sentences: &[Vec<String>]) -> Vec<String> {
        let mut pieces: indexmap::IndexSet<String> = indexmap::IndexSet::new();
        for sentence in sentences {
            for word in sentence {
                pieces.insert(word.clone());
                for c in word.chars() {
                    pieces.insert(c.to_string());
                    pieces.insert(format!("##{c}"));
                }
            }
        }
        pieces.into_iter().collect()
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces the parameter store, e.g. with fine-tuned weights.
    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        for name in self.params.names() {
            if !params.contains(name) {
                return Err(Error::Checkpoint(format!(
                    "encoder parameter {name:?} missing from replacement store"
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn identifier(&self) -> String {
        format!(
            "contextual:d{}:l{}:h{}:ff{}:v{}",
            self.cfg.dim,
            self.cfg.layers,
            self.cfg.heads,
            self.cfg.ff_dim,
            self.vocab.len()
        )
    }

    /// Greedy longest-match subword split of one word; an unmatchable word
    /// becomes a single `[UNK]`.
    fn wordpiece(&self, word: &str) -> Vec<usize> {
        let chars: Vec<char> = word.chars().collect();
        let mut ids = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            let mut end = chars.len();
            while end > start {
                let raw: String = chars[start..end].iter().collect();
                let piece = if start > 0 { format!("##{raw}") } else { raw };
                if let Some(&id) = self.lookup.get(&piece) {
                    matched = Some((id, end));
                    break;
                }
                end -= 1;
            }
            match matched {
                Some((id, consumed)) => {
                    ids.push(id);
                    start = consumed;
                }
                None => return vec![UNK_ID],
            }
        }
        ids
    }

    /// Tokenises text into subword pieces with `[CLS]`/`[SEP]` boundaries,
    /// truncating content so the whole sequence fits 128 positions.
    pub fn tokenize(&self, raw: &str) -> Result<TokenSequence> {
        if raw.trim().is_empty() {
            return Err(Error::Validation("cannot tokenize empty text".into()));
        }
        let mut ids = vec![CLS_ID];
        for word in text::word_tokens(raw) {
            ids.extend(self.wordpiece(&word));
        }
        ids.truncate(MAX_SEQUENCE_LEN - 1);
        ids.push(SEP_ID);
        let tokens = ids.iter().map(|&id| self.vocab[id].clone()).collect();
        let mask = vec![true; ids.len()];
        TokenSequence::new(tokens, ids, mask)
    }

    /// Builds the differentiable encoder forward over token ids; parameters
    /// are bound from `store` (which must hold the `encoder.*` names).
    pub fn graph_forward(
        &self,
        g: &mut Graph,
        bind: &mut Bindings,
        store: &ParamStore,
        ids: &[usize],
    ) -> Var {
        assert!(!ids.is_empty() && ids.len() <= MAX_SEQUENCE_LEN);
        let cfg = &self.cfg;
        let head_dim = cfg.dim / cfg.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let tok_emb = bind.var(g, store, "encoder.tok_emb");
        let pos_emb = bind.var(g, store, "encoder.pos_emb");
        let tok = g.gather_rows(tok_emb, ids.to_vec());
        let pos = g.gather_rows(pos_emb, (0..ids.len()).collect());
        let mut x = g.add(tok, pos);

        for layer in 0..cfg.layers {
            let p = |name: &str| format!("encoder.l{layer}.{name}");
            // Multi-head self-attention.
            let mut heads = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let wq = bind.var(g, store, &p(&format!("h{h}.wq")));
                let bq = bind.var(g, store, &p(&format!("h{h}.bq")));
                let wk = bind.var(g, store, &p(&format!("h{h}.wk")));
                let bk = bind.var(g, store, &p(&format!("h{h}.bk")));
                let wv = bind.var(g, store, &p(&format!("h{h}.wv")));
                let bv = bind.var(g, store, &p(&format!("h{h}.bv")));
                let q = g.matmul(x, wq);
                let q = g.add_row(q, bq);
                let k = g.matmul(x, wk);
                let k = g.add_row(k, bk);
                let v = g.matmul(x, wv);
                let v = g.add_row(v, bv);
                let kt = g.transpose(k);
                let scores = g.matmul(q, kt);
                let scores = g.scale(scores, scale);
                let attn = g.softmax_rows(scores);
                heads.push(g.matmul(attn, v));
            }
            let merged = g.concat_cols(&heads);
            let wo = bind.var(g, store, &p("attn.wo"));
            let bo = bind.var(g, store, &p("attn.bo"));
            let proj = g.matmul(merged, wo);
            let proj = g.add_row(proj, bo);
            let residual = g.add(x, proj);
            x = layer_norm(g, bind, store, residual, &p("ln1"));

            // Position-wise feed-forward.
            let w1 = bind.var(g, store, &p("ffn.w1"));
            let b1 = bind.var(g, store, &p("ffn.b1"));
            let w2 = bind.var(g, store, &p("ffn.w2"));
            let b2 = bind.var(g, store, &p("ffn.b2"));
            let hidden = g.matmul(x, w1);
            let hidden = g.add_row(hidden, b1);
            let hidden = g.relu(hidden);
            let out = g.matmul(hidden, w2);
            let out = g.add_row(out, b2);
            let residual = g.add(x, out);
            x = layer_norm(g, bind, store, residual, &p("ln2"));
        }
        x
    }

    /// Evaluation-mode forward: contextual vectors for the given ids.
    pub fn embed_ids(&self, ids: &[usize]) -> Mat {
        let mut g = Graph::new();
        let mut bind = Bindings::new();
        let out = self.graph_forward(&mut g, &mut bind, &self.params, ids);
        g.value(out).clone()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let checkpoint = EncoderCheckpoint {
            version: CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            vocab: self.vocab.clone(),
            params: self.params.to_serializable(),
        };
        let json = serde_json::to_string(&checkpoint)
            .map_err(|e| Error::Checkpoint(format!("serialising encoder: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let checkpoint: EncoderCheckpoint = serde_json::from_str(&raw)
            .map_err(|e| Error::Checkpoint(format!("corrupt encoder checkpoint: {e}")))?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported encoder checkpoint version {}",
                checkpoint.version
            )));
        }
        checkpoint.config.validate()?;
        let mut lookup = HashMap::with_capacity(checkpoint.vocab.len());
        for (idx, piece) in checkpoint.vocab.iter().enumerate() {
            if lookup.insert(piece.clone(), idx).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocab piece {piece:?}")));
            }
        }
        let params = ParamStore::from_serializable(checkpoint.params)?;
        let expected = init_params(
            &checkpoint.config,
            checkpoint.vocab.len(),
            &mut ChaCha20Rng::seed_from_u64(0),
        );
        for (name, mat) in expected.iter() {
            if !params.contains(name) {
                return Err(Error::Checkpoint(format!("missing parameter {name:?}")));
            }
            if params.get(name).dim() != mat.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    params.get(name).dim(),
                    mat.dim()
                )));
            }
        }
        Ok(ContextualEncoder {
            cfg: checkpoint.config,
            vocab: checkpoint.vocab,
            lookup,
            params,
        })
    }
}

/// LayerNorm over each row, composed from tape primitives.
fn layer_norm(
    g: &mut Graph,
    bind: &mut Bindings,
    store: &ParamStore,
    x: Var,
    prefix: &str,
) -> Var {
    let mu = g.mean_cols(x);
    let neg_mu = g.scale(mu, -1.0);
    let centered = g.add_col(x, neg_mu);
    let sq = g.square(centered);
    let var = g.mean_cols(sq);
    let var_eps = g.add_scalar(var, LAYER_NORM_EPS);
    let std = g.sqrt(var_eps);
    let inv = g.recip(std);
    let normed = g.mul_col(centered, inv);
    let gamma = bind.var(g, store, &format!("{prefix}.gamma"));
    let beta = bind.var(g, store, &format!("{prefix}.beta"));
    let scaled = g.mul_row(normed, gamma);
    g.add_row(scaled, beta)
}

fn init_params(cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha20Rng) -> ParamStore {
    let mut params = ParamStore::new();
    let d = cfg.dim;
    let head_dim = d / cfg.heads;
    params.insert("encoder.tok_emb", uniform_row_vectors(rng, vocab_size, d));
    params.insert("encoder.pos_emb", uniform_row_vectors(rng, MAX_SEQUENCE_LEN, d));
    for layer in 0..cfg.layers {
        let p = |name: &str| format!("encoder.l{layer}.{name}");
        for h in 0..cfg.heads {
            params.insert(p(&format!("h{h}.wq")), uniform_fan_in(rng, d, head_dim));
            params.insert(p(&format!("h{h}.bq")), Mat::zeros((1, head_dim)));
            params.insert(p(&format!("h{h}.wk")), uniform_fan_in(rng, d, head_dim));
            params.insert(p(&format!("h{h}.bk")), Mat::zeros((1, head_dim)));
            params.insert(p(&format!("h{h}.wv")), uniform_fan_in(rng, d, head_dim));
            params.insert(p(&format!("h{h}.bv")), Mat::zeros((1, head_dim)));
        }
        params.insert(p("attn.wo"), uniform_fan_in(rng, d, d));
        params.insert(p("attn.bo"), Mat::zeros((1, d)));
        params.insert(p("ln1.gamma"), Mat::from_elem((1, d), 1.0));
        params.insert(p("ln1.beta"), Mat::zeros((1, d)));
        params.insert(p("ffn.w1"), uniform_fan_in(rng, d, cfg.ff_dim));
        params.insert(p("ffn.b1"), Mat::zeros((1, cfg.ff_dim)));
        params.insert(p("ffn.w2"), uniform_fan_in(rng, cfg.ff_dim, d));
        params.insert(p("ffn.b2"), Mat::zeros((1, d)));
        params.insert(p("ln2.gamma"), Mat::from_elem((1, d), 1.0));
        params.insert(p("ln2.beta"), Mat::zeros((1, d)));
    }
    params
}
