//! Skip-gram training with negative sampling for the static backends.
//!
//! The word variant learns one input vector per vocabulary word; the subword
//! variant represents a word as the mean of its character n-gram vectors and
//! spreads gradients over the constituent n-grams. Training is sequential
//! and fully seeded, so a fixed seed reproduces the table bit-for-bit.

use indexmap::{IndexMap, IndexSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::table::{extract_ngrams, NgramTable, StaticEmbeddingTable};
use crate::error::Error;
use crate::Result;

/// Hyperparameters for static-table training.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negative: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
    /// `Some((min_n, max_n))` trains the subword variant.
    pub subword: Option<(usize, usize)>,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 5,
            epochs: 5,
            negative: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 42,
            subword: None,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::Embedding(
                "dim, window and epochs must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Embedding("learning rate must be positive".into()));
        }
        if let Some((min_n, max_n)) = self.subword {
            if min_n == 0 || min_n > max_n {
                return Err(Error::Embedding(format!(
                    "invalid n-gram range {min_n}..={max_n}"
                )));
            }
        }
        Ok(())
    }
}

struct Vocab {
    words: IndexMap<String, usize>, // word -> corpus count, frequency-ordered
}

fn build_vocab(sentences: &[Vec<String>], min_count: usize) -> Result<Vocab> {
    let mut counts: IndexMap<String, usize> = IndexMap::new();
    for sentence in sentences {
        for word in sentence {
            *counts.entry(word.clone()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Embedding(
            "cannot train embeddings on an empty corpus".into(),
        ));
    }
    // Descending count; first occurrence breaks ties so ordering is stable.
    let mut indexed: Vec<(usize, String, usize)> = counts
        .into_iter()
        .enumerate()
        .map(|(order, (w, c))| (order, w, c))
        .collect();
    indexed.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    let words: IndexMap<String, usize> = indexed
        .into_iter()
        .filter(|(_, _, c)| *c >= min_count)
        .map(|(_, w, c)| (w, c))
        .collect();
    if words.is_empty() {
        return Err(Error::Embedding(format!(
            "no word reaches min_count {min_count}"
        )));
    }
    Ok(Vocab { words })
}

/// Cumulative distribution for unigram^0.75 negative sampling.
struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(vocab: &Vocab) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.words.len());
        let mut total = 0.0;
        for &count in vocab.words.values() {
            total += (count as f64).powf(0.75);
            cumulative.push(total);
        }
        NegativeSampler { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocab");
        let x = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains a static table on tokenised sentences.
pub fn train_static_table(
    sentences: &[Vec<String>],
    cfg: &SgnsConfig,
) -> Result<StaticEmbeddingTable> {
    cfg.validate()?;
    let vocab = build_vocab(sentences, cfg.min_count)?;
    let n_words = vocab.words.len();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    // Word -> constituent n-gram ids (subword mode only).
    let (ngram_list, word_grams): (Vec<String>, Vec<Vec<usize>>) = match cfg.subword {
        Some((min_n, max_n)) => {
            let mut inventory: IndexSet<String> = IndexSet::new();
            let mut per_word = Vec::with_capacity(n_words);
            for word in vocab.words.keys() {
                let grams = extract_ngrams(word, min_n, max_n);
                let ids: Vec<usize> = grams
                    .into_iter()
                    .map(|g| inventory.insert_full(g).0)
                    .collect();
                per_word.push(ids);
            }
            (inventory.into_iter().collect(), per_word)
        }
        None => (Vec::new(), Vec::new()),
    };

    let init = |rng: &mut ChaCha20Rng, rows: usize, dim: usize| -> Vec<Vec<f64>> {
        let bound = 0.5 / dim as f64;
        (0..rows)
            .map(|_| (0..dim).map(|_| rng.gen_range(-bound..bound)).collect())
            .collect()
    };
    // Input vectors: per word (word mode) or per n-gram (subword mode).
    let mut input: Vec<Vec<f64>> = if cfg.subword.is_some() {
        init(&mut rng, ngram_list.len(), cfg.dim)
    } else {
        init(&mut rng, n_words, cfg.dim)
    };
    // Output (context) vectors start at zero, as is conventional.
    let mut output: Vec<Vec<f64>> = vec![vec![0.0; cfg.dim]; n_words];

    let sampler = NegativeSampler::new(&vocab);
    let sentence_ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|w| vocab.words.get_index_of(w))
                .collect()
        })
        .collect();
    let tokens_per_epoch: usize = sentence_ids.iter().map(Vec::len).sum();
    let planned = (tokens_per_epoch * cfg.epochs).max(1) as f64;
    let mut processed = 0usize;

    let compose = |input: &[Vec<f64>], word: usize| -> Vec<f64> {
        match cfg.subword {
            None => input[word].clone(),
            Some(_) => {
                let grams = &word_grams[word];
                let mut h = vec![0.0; cfg.dim];
                for &g in grams {
                    for (hv, iv) in h.iter_mut().zip(&input[g]) {
                        *hv += iv;
                    }
                }
                let k = grams.len().max(1) as f64;
                for hv in &mut h {
                    *hv /= k;
                }
                h
            }
        }
    };

    for _epoch in 0..cfg.epochs {
        for sentence in &sentence_ids {
            for (pos, &center) in sentence.iter().enumerate() {
                processed += 1;
                let lr = cfg.learning_rate
                    * (1.0 - (processed as f64 - 1.0) / planned).max(1e-4);
                let reach = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in
                    sentence.iter().enumerate().take(hi + 1).skip(lo)
                {
                    if ctx_pos == pos {
                        continue;
                    }
                    let h = compose(&input, center);
                    let mut grad_h = vec![0.0; cfg.dim];
                    // Positive target plus sampled negatives.
                    for k in 0..=cfg.negative {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            (sampler.sample(&mut rng), 0.0)
                        };
                        if label == 0.0 && target == context {
                            continue;
                        }
                        let dot: f64 = h.iter().zip(&output[target]).map(|(a, b)| a * b).sum();
                        let g = (sigmoid(dot) - label) * lr;
                        for (gh, ov) in grad_h.iter_mut().zip(&output[target]) {
                            *gh += g * ov;
                        }
                        for (ov, hv) in output[target].iter_mut().zip(&h) {
                            *ov -= g * hv;
                        }
                    }
                    match cfg.subword {
                        None => {
                            for (iv, gh) in input[center].iter_mut().zip(&grad_h) {
                                *iv -= gh;
                            }
                        }
                        Some(_) => {
                            let grams = &word_grams[center];
                            let k = grams.len().max(1) as f64;
                            for &gram in grams {
                                for (iv, gh) in input[gram].iter_mut().zip(&grad_h) {
                                    *iv -= gh / k;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Final table: stored word vectors are the learned representations; the
    // subword variant keeps the n-gram map for OOV composition.
    let mut words = IndexMap::with_capacity(n_words);
    for (idx, word) in vocab.words.keys().enumerate() {
        words.insert(word.clone(), compose(&input, idx));
    }
    let ngrams = cfg.subword.map(|(min_n, max_n)| NgramTable {
        min_n,
        max_n,
        vectors: ngram_list.into_iter().zip(input).collect(),
    });
    StaticEmbeddingTable::new(cfg.dim, words, ngrams, vec![0.0; cfg.dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_sentences() -> Vec<Vec<String>> {
        let lines = [
            "ভালো খেলা আজ হলো",
            "খারাপ দল হেরে গেলো",
            "ভালো দিন ভালো খবর",
            "খারাপ খবর আজ এলো",
            "দল ভালো খেলা খেলে",
        ];
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn tiny_cfg(subword: Option<(usize, usize)>) -> SgnsConfig {
        SgnsConfig {
            dim: 16,
            window: 2,
            epochs: 3,
            negative: 3,
            learning_rate: 0.05,
            min_count: 1,
            seed: 7,
            subword,
        }
    }

    #[test]
    fn covers_full_vocabulary_at_min_count_one() {
        let table = train_static_table(&toy_sentences(), &tiny_cfg(None)).unwrap();
        for sentence in toy_sentences() {
            for word in sentence {
                assert!(table.contains(&word), "missing {word:?}");
            }
        }
        assert_eq!(table.dim(), 16);
    }

    #[test]
    fn min_count_filters_rare_words() {
        let cfg = SgnsConfig {
            min_count: 2,
            ..tiny_cfg(None)
        };
        let table = train_static_table(&toy_sentences(), &cfg).unwrap();
        assert!(table.contains("ভালো"));
        assert!(!table.contains("হলো")); // appears once
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let a = train_static_table(&toy_sentences(), &tiny_cfg(None)).unwrap();
        let b = train_static_table(&toy_sentences(), &tiny_cfg(None)).unwrap();
        assert_eq!(a, b);
        let c = train_static_table(&toy_sentences(), &tiny_cfg(Some((3, 6)))).unwrap();
        let d = train_static_table(&toy_sentences(), &tiny_cfg(Some((3, 6)))).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn different_seeds_differ() {
        let a = train_static_table(&toy_sentences(), &tiny_cfg(None)).unwrap();
        let cfg = SgnsConfig {
            seed: 8,
            ..tiny_cfg(None)
        };
        let b = train_static_table(&toy_sentences(), &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(train_static_table(&[], &tiny_cfg(None)).is_err());
        assert!(train_static_table(&[vec![]], &tiny_cfg(None)).is_err());
    }

    #[test]
    fn subword_table_keeps_ngram_inventory() {
        let table = train_static_table(&toy_sentences(), &tiny_cfg(Some((3, 6)))).unwrap();
        assert!(table.has_ngrams());
        assert_eq!(table.ngram_range(), Some((3, 6)));
    }

    #[test]
    fn subword_vectors_relate_words_sharing_ngrams() {
        // An OOV word sharing most n-grams with a vocabulary word should get
        // a vector close to it (compared against an unrelated word).
        let table = train_static_table(&toy_sentences(), &tiny_cfg(Some((2, 4)))).unwrap();
        let known = table.lookup("ভালো");
        let oov = table.lookup("ভালোর"); // shares a prefix with "ভালো"
        assert_ne!(oov, table.unk_vector().to_vec());
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let unrelated = table.lookup("খারাপ");
        assert!(cos(&known, &oov) > cos(&unrelated, &oov));
    }

    #[test]
    fn sgns_update_matches_finite_difference_of_its_loss() {
        // One positive pair, no negatives: loss = -ln sigmoid(u . v).
        // The analytic update applied by the trainer is g = (sigmoid(dot) - 1);
        // check dloss/ddot against central differences.
        let u = [0.3, -0.2, 0.5];
        let v = [0.1, 0.4, -0.3];
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let analytic = sigmoid(dot) - 1.0;
        let eps = 1e-6;
        let loss = |d: f64| -sigmoid(d).ln();
        let numeric = (loss(dot + eps) - loss(dot - eps)) / (2.0 * eps);
        assert!((analytic - numeric).abs() < 1e-8);
    }
}
