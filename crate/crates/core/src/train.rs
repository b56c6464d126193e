//! Training: Adam over mean cross-entropy with an L2 penalty, per-epoch
//! shuffling, early stopping on validation accuracy, and self-describing
//! checkpoints that reproduce forward outputs exactly on reload.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, SplitCorpus};
use crate::embed::{
    BackendKind, ContextualEncoder, EmbeddedSequence, EmbeddingBackend, EncoderConfig,
    StaticEmbeddingTable, TokenSequence,
};
use crate::error::Error;
use crate::manifest::{sha256_bytes, FileDigest};
use crate::model::{ClassifierModel, FeatureMode, HeadConfig, ModelInput};
use crate::nn::{Adam, Bindings, Graph, ParamStore, SerializableParams};
use crate::Result;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimisation settings. Defaults: batch 32, 20 epochs, patience 3,
/// L2 0.01, learning rate 2e-5 for the contextual backend and 1e-3 for the
/// static ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    pub patience: usize,
    pub l2_coefficient: f64,
    pub seed: u64,
    pub fine_tune_encoder: bool,
}

impl TrainConfig {
    pub fn default_for(kind: BackendKind) -> Self {
        TrainConfig {
            learning_rate: match kind {
                BackendKind::Contextual => 2e-5,
                _ => 1e-3,
            },
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            l2_coefficient: 0.01,
            seed: 42,
            fine_tune_encoder: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Validation(
                "batch size and max epochs must be positive".into(),
            ));
        }
        if self.l2_coefficient < 0.0 {
            return Err(Error::Validation(format!(
                "l2 coefficient must be non-negative, got {}",
                self.l2_coefficient
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Validation(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// One epoch's metrics; accuracies come from an evaluation-mode pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

/// Per-epoch history; `best_epoch` is 1-based and points at the highest
/// validation accuracy (earliest on ties), or the last epoch without a
/// validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

struct Prepared {
    seq: TokenSequence,
    cached: Option<EmbeddedSequence>,
    target: usize,
}

fn prepare(model: &ClassifierModel, corpus: &LabeledCorpus, fine_tune: bool) -> Result<Vec<Prepared>> {
    let arity = model.arity();
    let contextual_fine_tune =
        fine_tune && matches!(model.backend(), EmbeddingBackend::Contextual(_));
    corpus
        .entries()
        .iter()
        .map(|entry| {
            let seq = model.backend().tokenize(&entry.text)?;
            let cached = if contextual_fine_tune {
                None
            } else {
                Some(model.backend().embed(&seq)?)
            };
            let target = arity
                .class_index(entry.label)
                .expect("corpus label admissible for its arity");
            Ok(Prepared {
                seq,
                cached,
                target,
            })
        })
        .collect()
}

fn eval_accuracy(model: &ClassifierModel, samples: &[Prepared]) -> Result<f64> {
    let mut correct = 0usize;
    for sample in samples {
        let mut g = Graph::new();
        let mut bind = Bindings::new();
        let input = match &sample.cached {
            Some(emb) => ModelInput::Embedded(emb),
            None => ModelInput::Tokens(&sample.seq),
        };
        let logits = model.graph_logits(&mut g, &mut bind, input, None)?;
        let row = g.value(logits);
        let mut best = 0usize;
        for c in 1..row.ncols() {
            if row[(0, c)] > row[(0, best)] {
                best = c;
            }
        }
        if best == sample.target {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// True for weight matrices; biases and layer-norm shifts (final name
/// segment starting with `b`) are excluded from the L2 penalty.
pub fn is_weight_param(name: &str) -> bool {
    name.rsplit('.')
        .next()
        .map(|last| !last.starts_with('b'))
        .unwrap_or(true)
}

/// Optimises the model in place and returns the per-epoch history. The
/// model ends at the best-validation-epoch parameters.
pub fn train(
    model: &mut ClassifierModel,
    splits: &SplitCorpus,
    cfg: &TrainConfig,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    if splits.arity() != model.arity() {
        return Err(Error::ArityMismatch {
            message: format!(
                "splits are {}-class, model is {}-class",
                splits.arity(),
                model.num_classes()
            ),
        });
    }
    if splits.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    if splits.valid.is_empty() && cfg.patience > 0 {
        return Err(Error::Validation(
            "validation split is empty; set patience to 0 to train without early stopping".into(),
        ));
    }

    let train_samples = prepare(model, &splits.train, cfg.fine_tune_encoder)?;
    let valid_samples = if splits.valid.is_empty() {
        Vec::new()
    } else {
        prepare(model, &splits.valid, cfg.fine_tune_encoder)?
    };
    let trainable: std::collections::HashSet<String> = model
        .trainable_names(cfg.fine_tune_encoder)
        .into_iter()
        .collect();

    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut adam = Adam::new(cfg.learning_rate);

    let mut history = TrainingHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_params: Option<ParamStore> = None;
    let mut indices: Vec<usize> = (0..train_samples.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let mut bind = Bindings::new();
            let mut logit_rows = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let sample = &train_samples[idx];
                let input = match &sample.cached {
                    Some(emb) => ModelInput::Embedded(emb),
                    None => ModelInput::Tokens(&sample.seq),
                };
                logit_rows.push(model.graph_logits(&mut g, &mut bind, input, Some(&mut dropout_rng))?);
                targets.push(sample.target);
            }
            let batch_logits = g.concat_rows(&logit_rows);
            let loss = g.mean_cross_entropy(batch_logits, targets);
            let ce = g.value(loss)[(0, 0)];
            g.backward(loss);
            let mut grads = bind.collect_grads(&g, model.params());
            grads.retain(|name, _| trainable.contains(name));

            // L2 on weight matrices: penalty l2 * sum w^2, gradient 2 l2 w.
            let mut penalty = 0.0;
            if cfg.l2_coefficient > 0.0 {
                for (name, grad) in grads.iter_mut() {
                    if !is_weight_param(name) {
                        continue;
                    }
                    let w = model.params().get(name);
                    penalty += cfg.l2_coefficient * w.iter().map(|v| v * v).sum::<f64>();
                    *grad += &(w * (2.0 * cfg.l2_coefficient));
                }
            }
            let batch_loss = ce + penalty;
            if !batch_loss.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite training loss at epoch {epoch} (cross-entropy {ce}, l2 penalty {penalty}); aborting"
                )));
            }
            adam.step(model.params_mut(), &grads);
            loss_sum += batch_loss * chunk.len() as f64;
            loss_count += chunk.len();
        }

        let train_loss = loss_sum / loss_count as f64;
        let train_accuracy = eval_accuracy(model, &train_samples)?;
        let valid_accuracy = if valid_samples.is_empty() {
            None
        } else {
            Some(eval_accuracy(model, &valid_samples)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            valid_accuracy,
        });

        match valid_accuracy {
            Some(acc) => {
                if acc > best_accuracy {
                    best_accuracy = acc;
                    history.best_epoch = epoch;
                    best_params = Some(model.params().clone());
                }
                if cfg.patience > 0 && epoch - history.best_epoch >= cfg.patience {
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }

    if let Some(params) = best_params {
        *model.params_mut() = params;
    }
    model.sync_encoder_params()?;
    model.mark_trained();
    Ok(history)
}

/// Reconstructible description of a backend inside a checkpoint. Static
/// tables are stored whole; the contextual encoder stores its architecture
/// and vocabulary, with weights living in the model parameter store.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    WordStatic { table: StaticEmbeddingTable },
    SubwordStatic { table: StaticEmbeddingTable },
    Contextual { config: EncoderConfig, vocab: Vec<String> },
}

impl BackendDescriptor {
    fn of(backend: &EmbeddingBackend) -> Self {
        match backend {
            EmbeddingBackend::WordStatic(table) => BackendDescriptor::WordStatic {
                table: table.clone(),
            },
            EmbeddingBackend::SubwordStatic(table) => BackendDescriptor::SubwordStatic {
                table: table.clone(),
            },
            EmbeddingBackend::Contextual(encoder) => BackendDescriptor::Contextual {
                config: encoder.config().clone(),
                vocab: encoder.vocab().to_vec(),
            },
        }
    }

    /// Kind of the described backend.
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendDescriptor::WordStatic { .. } => BackendKind::WordStatic,
            BackendDescriptor::SubwordStatic { .. } => BackendKind::SubwordStatic,
            BackendDescriptor::Contextual { .. } => BackendKind::Contextual,
        }
    }
}

/// Self-describing checkpoint container, serialised as JSON with exact
/// float round-tripping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub backend_identifier: String,
    pub backend: BackendDescriptor,
    pub head: HeadConfig,
    pub num_classes: usize,
    pub feature_mode: FeatureMode,
    pub params: SerializableParams,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
    pub data_digests: Vec<FileDigest>,
    /// SHA-256 over the serialised checkpoint with this field empty;
    /// detects tampering or corruption.
    pub content_digest: String,
}

impl Checkpoint {
    fn compute_digest(&self) -> Result<String> {
        let mut clean = self.clone();
        clean.content_digest = String::new();
        let json = serde_json::to_vec(&clean)
            .map_err(|e| Error::Checkpoint(format!("serialising checkpoint: {e}")))?;
        Ok(sha256_bytes(&json))
    }
}

/// Serialises the model (parameters, backend, head, config, seed, data
/// digests) to `path`.
pub fn save_checkpoint(
    model: &ClassifierModel,
    path: impl AsRef<Path>,
    train_config: Option<&TrainConfig>,
    data_digests: Vec<FileDigest>,
) -> Result<()> {
    let path = path.as_ref();
    let mut checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        backend_identifier: model.backend().identifier(),
        backend: BackendDescriptor::of(model.backend()),
        head: model.head().clone(),
        num_classes: model.num_classes(),
        feature_mode: model.feature_mode(),
        params: model.params().to_serializable(),
        train_config: train_config.cloned(),
        seed: model.seed(),
        data_digests,
        content_digest: String::new(),
    };
    checkpoint.content_digest = checkpoint.compute_digest()?;
    let json = serde_json::to_string(&checkpoint)
        .map_err(|e| Error::Checkpoint(format!("serialising checkpoint: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// A reloaded model plus everything needed to reproduce or resume the run.
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub model: ClassifierModel,
    pub train_config: Option<TrainConfig>,
    pub backend_identifier: String,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl LoadedCheckpoint {
    /// Errors when the checkpoint's backend differs from what the caller's
    /// configuration expects.
    pub fn ensure_backend_kind(&self, expected: BackendKind) -> Result<()> {
        let found = self.model.backend().kind();
        if found != expected {
            return Err(Error::BackendMismatch {
                expected: expected.to_string(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

/// Loads a checkpoint. A content-digest mismatch is an error unless
/// `allow_digest_mismatch` is set, in which case it is reported as a
/// warning; recorded data files that have changed on disk always produce
/// warnings.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    allow_digest_mismatch: bool,
) -> Result<LoadedCheckpoint> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&raw)
        .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            checkpoint.version
        )));
    }
    let mut warnings = Vec::new();
    let expected_digest = checkpoint.compute_digest()?;
    if expected_digest != checkpoint.content_digest {
        let message = format!(
            "checkpoint content digest mismatch (stored {}, computed {}): file was modified after saving",
            checkpoint.content_digest, expected_digest
        );
        if allow_digest_mismatch {
            warnings.push(message);
        } else {
            return Err(Error::Checkpoint(format!(
                "{message}; pass the override flag to load anyway"
            )));
        }
    }
    for digest in &checkpoint.data_digests {
        match crate::manifest::sha256_file(&digest.path) {
            Ok(current) if current == digest.sha256 => {}
            Ok(_) => warnings.push(format!(
                "data file {} has changed since this checkpoint was trained",
                digest.path
            )),
            Err(_) => warnings.push(format!(
                "data file {} recorded in the checkpoint is no longer readable",
                digest.path
            )),
        }
    }

    let params = ParamStore::from_serializable(checkpoint.params)?;
    let backend = match checkpoint.backend {
        BackendDescriptor::WordStatic { table } => EmbeddingBackend::WordStatic(table),
        BackendDescriptor::SubwordStatic { table } => EmbeddingBackend::SubwordStatic(table),
        BackendDescriptor::Contextual { config, vocab } => {
            let mut encoder_params = ParamStore::new();
            for (name, mat) in params.iter() {
                if name.starts_with("encoder.") {
                    encoder_params.insert(name.clone(), mat.clone());
                }
            }
            EmbeddingBackend::Contextual(ContextualEncoder::from_parts(
                config,
                vocab,
                encoder_params,
            )?)
        }
    };
    let model = ClassifierModel::from_checkpoint_parts(
        backend,
        checkpoint.head,
        checkpoint.num_classes,
        checkpoint.feature_mode,
        params,
        checkpoint.seed,
        true,
    )?;
    Ok(LoadedCheckpoint {
        model,
        train_config: checkpoint.train_config,
        backend_identifier: checkpoint.backend_identifier,
        seed: checkpoint.seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{acquire_static_table, SgnsConfig, TableSource};
    use crate::model::{HeadSpec, RnnSpec};
    use crate::synth::separable_splits;
    use crate::corpus::TaskArity;

    fn small_model(splits: &SplitCorpus, seed: u64) -> ClassifierModel {
        let sgns = SgnsConfig {
            dim: 12,
            window: 2,
            epochs: 2,
            negative: 2,
            min_count: 1,
            seed,
            ..SgnsConfig::default()
        };
        let table = acquire_static_table(TableSource::TrainOnCorpus(&splits.train), &sgns).unwrap();
        let head = HeadConfig {
            arity: TaskArity::Two,
            spec: HeadSpec::Gru(RnnSpec {
                layers: 1,
                per_word_width: 8,
                dropout: 0.2,
            }),
        };
        ClassifierModel::build(
            EmbeddingBackend::WordStatic(table),
            head,
            2,
            FeatureMode::ConcatPositions,
            seed,
        )
        .unwrap()
    }

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 3,
            patience: 2,
            l2_coefficient: 0.001,
            seed,
            fine_tune_encoder: true,
        }
    }

    #[test]
    fn single_epoch_with_patience_zero() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 1);
        let mut model = small_model(&splits, 1);
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: 0,
            ..quick_cfg(1)
        };
        let history = train(&mut model, &splits, &cfg).unwrap();
        assert_eq!(history.epochs.len(), 1);
        assert_eq!(history.best_epoch, 1);
        assert!(model.is_trained());
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 2);
        let mut a = small_model(&splits, 7);
        let mut b = small_model(&splits, 7);
        let ha = train(&mut a, &splits, &quick_cfg(7)).unwrap();
        let hb = train(&mut b, &splits, &quick_cfg(7)).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params(), b.params());
        // Checkpoints are bitwise identical.
        let fa = tempfile::NamedTempFile::new().unwrap();
        let fb = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(&a, fa.path(), Some(&quick_cfg(7)), Vec::new()).unwrap();
        save_checkpoint(&b, fb.path(), Some(&quick_cfg(7)), Vec::new()).unwrap();
        assert_eq!(
            std::fs::read(fa.path()).unwrap(),
            std::fs::read(fb.path()).unwrap()
        );
    }

    #[test]
    fn empty_validation_requires_patience_zero() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 3);
        let empty_valid = SplitCorpus {
            train: splits.train.clone(),
            valid: LabeledCorpus::new(Vec::new(), TaskArity::Two).unwrap(),
            test: splits.test.clone(),
        };
        let mut model = small_model(&splits, 3);
        assert!(train(&mut model, &empty_valid, &quick_cfg(3)).is_err());
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 2,
            ..quick_cfg(3)
        };
        let history = train(&mut model, &empty_valid, &cfg).unwrap();
        assert_eq!(history.best_epoch, 2);
        assert!(history.epochs.iter().all(|e| e.valid_accuracy.is_none()));
    }

    #[test]
    fn early_stopping_bounds_executed_epochs() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 4);
        let mut model = small_model(&splits, 4);
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 2,
            ..quick_cfg(4)
        };
        let history = train(&mut model, &splits, &cfg).unwrap();
        assert!(history.epochs.len() <= history.best_epoch + cfg.patience);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let splits2 = separable_splits(TaskArity::Two, (4, 2, 2), 5);
        let splits3 = separable_splits(TaskArity::Three, (4, 2, 2), 5);
        let mut model = small_model(&splits2, 5);
        assert!(matches!(
            train(&mut model, &splits3, &quick_cfg(5)),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn diverging_run_aborts_with_diagnostic() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 6);
        let mut model = small_model(&splits, 6);
        let cfg = TrainConfig {
            learning_rate: 1e200,
            l2_coefficient: 0.01,
            max_epochs: 5,
            patience: 0,
            ..quick_cfg(6)
        };
        match train(&mut model, &splits, &cfg) {
            Err(Error::Train(message)) => assert!(message.contains("non-finite")),
            other => panic!("expected divergence abort, got {other:?}"),
        }
    }

    #[test]
    fn large_l2_shrinks_weight_norms() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 8);
        let mut free = small_model(&splits, 8);
        let mut penalised = small_model(&splits, 8);
        let base = TrainConfig {
            max_epochs: 5,
            patience: 0,
            l2_coefficient: 0.0,
            ..quick_cfg(8)
        };
        train(&mut free, &splits, &base).unwrap();
        let heavy = TrainConfig {
            l2_coefficient: 1e3,
            ..base
        };
        train(&mut penalised, &splits, &heavy).unwrap();
        let norm = |m: &ClassifierModel| {
            m.params().squared_norm(is_weight_param)
        };
        assert!(
            norm(&penalised) < norm(&free),
            "penalised {} vs free {}",
            norm(&penalised),
            norm(&free)
        );
    }

    #[test]
    fn overfits_a_small_separable_corpus() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 9);
        let mut model = small_model(&splits, 9);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 12,
            max_epochs: 60,
            patience: 0,
            l2_coefficient: 0.0,
            seed: 9,
            fine_tune_encoder: true,
        };
        let history = train(&mut model, &splits, &cfg).unwrap();
        let final_acc = history.epochs.last().unwrap().train_accuracy;
        assert!(final_acc >= 0.9, "train accuracy {final_acc}");
    }

    #[test]
    fn checkpoint_round_trip_reproduces_forward_exactly() {
        let splits = separable_splits(TaskArity::Two, (6, 3, 3), 10);
        let mut model = small_model(&splits, 10);
        train(&mut model, &splits, &quick_cfg(10)).unwrap();
        let probe: Vec<EmbeddedSequence> = splits
            .test
            .entries()
            .iter()
            .map(|e| model.backend().embed_text(&e.text).unwrap())
            .collect();
        let before = model.forward_batch(&probe).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(&model, f.path(), Some(&quick_cfg(10)), Vec::new()).unwrap();
        let loaded = load_checkpoint(f.path(), false).unwrap();
        assert!(loaded.warnings.is_empty());
        assert!(loaded.model.is_trained());
        let after = loaded.model.forward_batch(&probe).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn backend_kind_mismatch_is_detected() {
        let splits = separable_splits(TaskArity::Two, (4, 2, 2), 11);
        let model = small_model(&splits, 11);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(&model, f.path(), None, Vec::new()).unwrap();
        let loaded = load_checkpoint(f.path(), false).unwrap();
        assert!(loaded.ensure_backend_kind(BackendKind::WordStatic).is_ok());
        assert!(matches!(
            loaded.ensure_backend_kind(BackendKind::Contextual),
            Err(Error::BackendMismatch { .. })
        ));
    }

    #[test]
    fn tampered_checkpoint_warns_with_override_and_errors_without() {
        let splits = separable_splits(TaskArity::Two, (4, 2, 2), 12);
        let model = small_model(&splits, 12);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(&model, f.path(), None, Vec::new()).unwrap();
        let raw = std::fs::read_to_string(f.path()).unwrap();
        let tampered = raw.replacen("\"seed\":12", "\"seed\":13", 1);
        assert_ne!(raw, tampered, "tamper target not found");
        std::fs::write(f.path(), tampered).unwrap();
        assert!(matches!(
            load_checkpoint(f.path(), false),
            Err(Error::Checkpoint(_))
        ));
        let loaded = load_checkpoint(f.path(), true).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("digest mismatch"));
    }

    #[test]
    fn changed_data_file_produces_warning() {
        let splits = separable_splits(TaskArity::Two, (4, 2, 2), 13);
        let model = small_model(&splits, 13);
        let data = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(data.path(), "original").unwrap();
        let digest = crate::manifest::file_digest(data.path()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(&model, f.path(), None, vec![digest]).unwrap();
        std::fs::write(data.path(), "modified").unwrap();
        let loaded = load_checkpoint(f.path(), false).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("has changed"));
    }

    #[test]
    fn corrupt_checkpoint_file_is_an_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "{not json").unwrap();
        assert!(matches!(
            load_checkpoint(f.path(), false),
            Err(Error::Checkpoint(_))
        ));
    }

    use crate::corpus::LabeledCorpus;

    #[test]
    fn contextual_fine_tune_updates_encoder_and_freezing_does_not() {
        let splits = separable_splits(TaskArity::Two, (4, 2, 2), 14);
        let sentences: Vec<Vec<String>> = splits
            .train
            .entries()
            .iter()
            .map(|e| crate::text::word_tokens(&e.text))
            .collect();
        let pieces = ContextualEncoder::pieces_from_sentences(&sentences);
        let enc_cfg = EncoderConfig {
            dim: 8,
            layers: 1,
            heads: 2,
            ff_dim: 16,
        };
        let head = HeadConfig {
            arity: TaskArity::Two,
            spec: HeadSpec::Gru(RnnSpec {
                layers: 1,
                per_word_width: 6,
                dropout: 0.0,
            }),
        };
        for (fine_tune, expect_change) in [(true, true), (false, false)] {
            let encoder = ContextualEncoder::random_init(pieces.clone(), enc_cfg.clone(), 14).unwrap();
            let before = encoder.params().get("encoder.tok_emb").clone();
            let mut model = ClassifierModel::build(
                EmbeddingBackend::Contextual(encoder),
                head.clone(),
                2,
                FeatureMode::ConcatPositions,
                14,
            )
            .unwrap();
            let cfg = TrainConfig {
                learning_rate: 0.01,
                batch_size: 8,
                max_epochs: 2,
                patience: 0,
                l2_coefficient: 0.0,
                seed: 14,
                fine_tune_encoder: fine_tune,
            };
            train(&mut model, &splits, &cfg).unwrap();
            let after = model.params().get("encoder.tok_emb");
            assert_eq!(
                before != *after,
                expect_change,
                "fine_tune={fine_tune} should {}change the encoder",
                if expect_change { "" } else { "not " }
            );
        }
    }
}
