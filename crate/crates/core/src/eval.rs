//! Scoring and the full backends x heads x tasks comparison matrix.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, SentimentLabel, SplitCorpus, TaskArity};
use crate::embed::{
    acquire_static_table, BackendKind, ContextualEncoder, EmbeddingBackend, EncoderConfig,
    SgnsConfig, TableSource,
};
use crate::error::Error;
use crate::model::{ClassifierModel, FeatureMode, HeadConfig, HeadKind, SentimentClassifier};
use crate::train::{save_checkpoint, train, TrainConfig, TrainingHistory};
use crate::Result;

/// Per-class precision/recall/F1. Metrics with a zero denominator are
/// reported as 0.0 with the corresponding `*_defined` flag cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

/// Accuracy, confusion matrix (rows = true class, columns = predicted) and
/// per-class metrics over one test corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub arity: TaskArity,
    pub sample_count: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
}

impl EvaluationReport {
    /// Builds every metric from a confusion matrix; accuracy is the trace
    /// over the total.
    pub fn from_confusion(confusion: Vec<Vec<usize>>, arity: TaskArity) -> Result<Self> {
        let k = arity.num_classes();
        if confusion.len() != k || confusion.iter().any(|row| row.len() != k) {
            return Err(Error::Shape(format!("confusion matrix must be {k}x{k}")));
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Validation("cannot evaluate an empty test set".into()));
        }
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let labels = arity.class_labels();
        let mut per_class = Vec::with_capacity(k);
        for i in 0..k {
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = (0..k).map(|r| confusion[r][i]).sum();
            let tp = confusion[i][i];
            let (precision, precision_defined) = ratio(tp, predicted);
            let (recall, recall_defined) = ratio(tp, support);
            let (f1, f1_defined) = if precision + recall > 0.0 {
                (2.0 * precision * recall / (precision + recall), true)
            } else {
                (0.0, false)
            };
            per_class.push(ClassMetrics {
                label: labels[i],
                support,
                precision,
                recall,
                f1,
                precision_defined,
                recall_defined,
                f1_defined,
            });
        }
        Ok(EvaluationReport {
            arity,
            sample_count: total,
            accuracy: trace as f64 / total as f64,
            confusion,
            per_class,
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples\t{}\naccuracy\t{:.4}\n",
            self.sample_count, self.accuracy
        ));
        out.push_str("confusion (rows true, cols predicted)\n");
        let labels = self.arity.class_labels();
        out.push('\t');
        out.push_str(&labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join("\t"));
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(labels[i].as_str());
            for v in row {
                out.push_str(&format!("\t{v}"));
            }
            out.push('\n');
        }
        out.push_str("class\tsupport\tprecision\trecall\tf1\n");
        for m in &self.per_class {
            out.push_str(&format!(
                "{}\t{}\t{:.4}{}\t{:.4}{}\t{:.4}{}\n",
                m.label,
                m.support,
                m.precision,
                if m.precision_defined { "" } else { "*" },
                m.recall,
                if m.recall_defined { "" } else { "*" },
                m.f1,
                if m.f1_defined { "" } else { "*" },
            ));
        }
        if self.per_class.iter().any(|m| {
            !(m.precision_defined && m.recall_defined && m.f1_defined)
        }) {
            out.push_str("* zero denominator, reported as 0\n");
        }
        out
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// Scores a classifier over a non-empty test corpus. Deterministic: the
/// report is a pure function of model predictions and data.
pub fn evaluate<M: SentimentClassifier + ?Sized>(
    model: &M,
    test: &LabeledCorpus,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty test set".into()));
    }
    let arity = test.arity();
    if model.num_classes() != arity.num_classes() {
        return Err(Error::ArityMismatch {
            message: format!(
                "model has {} classes, test corpus is {arity}-class",
                model.num_classes()
            ),
        });
    }
    let k = arity.num_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    for entry in test.entries() {
        let predicted = model.predict_label(&entry.text)?;
        let t = arity.class_index(entry.label).expect("admissible label");
        let p = arity.class_index(predicted).ok_or_else(|| {
            Error::Validation(format!(
                "model predicted {predicted}, inadmissible for a {arity}-class task"
            ))
        })?;
        confusion[t][p] += 1;
    }
    EvaluationReport::from_confusion(confusion, arity)
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub backend: BackendKind,
    pub head: HeadKind,
    pub arity: TaskArity,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Where the matrix runner gets a contextual encoder.
#[derive(Debug, Clone)]
pub enum EncoderProvider {
    /// Load a pre-trained encoder checkpoint; shared by all cells.
    CheckpointPath(PathBuf),
    /// Randomly initialised per cell (vocabulary from the train split);
    /// useful for smoke runs only.
    RandomInit { config: EncoderConfig },
}

/// Shared resources for building per-cell backends.
#[derive(Debug, Clone)]
pub struct MatrixResources {
    /// Static-table training settings; per-cell seed is injected.
    pub sgns: SgnsConfig,
    /// N-gram range for the subword backend.
    pub ngram_range: (usize, usize),
    pub encoder: Option<EncoderProvider>,
    pub feature_mode: FeatureMode,
}

impl Default for MatrixResources {
    fn default() -> Self {
        MatrixResources {
            sgns: SgnsConfig::default(),
            ngram_range: (3, 6),
            encoder: None,
            feature_mode: FeatureMode::ConcatPositions,
        }
    }
}

/// Stable per-cell seed derived from the master seed (splitmix64 step).
pub fn derive_cell_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Expands the cross product into specs, arity-major then backend then head,
/// with one derived seed per cell. When `lr_overridden` is false each cell
/// uses its backend's default learning rate.
pub fn build_specs(
    backends: &[BackendKind],
    heads: &[HeadKind],
    arities: &[TaskArity],
    base: &TrainConfig,
    lr_overridden: bool,
    master_seed: u64,
) -> Vec<ExperimentSpec> {
    let mut specs = Vec::new();
    let mut index = 0usize;
    for &arity in arities {
        for &backend in backends {
            for &head in heads {
                let seed = derive_cell_seed(master_seed, index);
                let mut train = base.clone();
                train.seed = seed;
                if !lr_overridden {
                    train.learning_rate = TrainConfig::default_for(backend).learning_rate;
                }
                specs.push(ExperimentSpec {
                    backend,
                    head,
                    arity,
                    train,
                    seed,
                });
                index += 1;
            }
        }
    }
    specs
}

/// Artifact locations for a completed cell (present when the matrix runs
/// with an output directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellArtifacts {
    pub directory: String,
    pub checkpoint: String,
    pub report: String,
    pub history: String,
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Completed {
        accuracy: f64,
        report: EvaluationReport,
        history: TrainingHistory,
        artifacts: Option<CellArtifacts>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub spec: ExperimentSpec,
    pub outcome: CellOutcome,
}

/// All cells of one matrix run, in spec order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub cells: Vec<MatrixCell>,
}

impl ResultMatrix {
    pub fn accuracy_of(
        &self,
        backend: BackendKind,
        head: HeadKind,
        arity: TaskArity,
    ) -> Option<f64> {
        self.cells.iter().find_map(|cell| {
            if cell.spec.backend == backend && cell.spec.head == head && cell.spec.arity == arity {
                match &cell.outcome {
                    CellOutcome::Completed { accuracy, .. } => Some(*accuracy),
                    CellOutcome::Failed { .. } => None,
                }
            } else {
                None
            }
        })
    }

    pub fn completed_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Completed { .. }))
            .count()
    }

    /// Aligned text table: blocks per task arity, rows in backend order
    /// (word_static, subword_static, contextual), columns GRU, LSTM, CNN.
    pub fn render_text(&self) -> Result<String> {
        if self.cells.is_empty() {
            return Err(Error::Validation("empty result matrix".into()));
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:<16} {:>8} {:>8} {:>8}\n",
            "task", "backend", "gru", "lstm", "cnn"
        ));
        for arity in [TaskArity::Two, TaskArity::Three] {
            for backend in BackendKind::ALL {
                let mut row_has_cells = false;
                let mut fields = Vec::new();
                for head in HeadKind::ALL {
                    let cell = self.cells.iter().find(|c| {
                        c.spec.backend == backend && c.spec.head == head && c.spec.arity == arity
                    });
                    let text = match cell {
                        Some(cell) => {
                            row_has_cells = true;
                            match &cell.outcome {
                                CellOutcome::Completed { accuracy, .. } => format!("{accuracy:.2}"),
                                CellOutcome::Failed { .. } => "failed".to_string(),
                            }
                        }
                        None => "-".to_string(),
                    };
                    fields.push(text);
                }
                if row_has_cells {
                    out.push_str(&format!(
                        "{:<8} {:<16} {:>8} {:>8} {:>8}\n",
                        format!("{arity}-class"),
                        backend.as_str(),
                        fields[0],
                        fields[1],
                        fields[2]
                    ));
                }
            }
        }
        Ok(out)
    }

    /// CSV with one row per cell.
    pub fn render_csv(&self) -> Result<String> {
        if self.cells.is_empty() {
            return Err(Error::Validation("empty result matrix".into()));
        }
        let mut out = String::from("task,backend,head,status,accuracy,error\n");
        for cell in &self.cells {
            let (status, accuracy, error) = match &cell.outcome {
                CellOutcome::Completed { accuracy, .. } => {
                    ("completed", format!("{accuracy}"), String::new())
                }
                CellOutcome::Failed { error } => {
                    ("failed", String::new(), error.replace([',', '\n'], ";"))
                }
            };
            out.push_str(&format!(
                "{}-class,{},{},{status},{accuracy},{error}\n",
                cell.spec.arity, cell.spec.backend, cell.spec.head
            ));
        }
        Ok(out)
    }
}

fn build_backend(
    spec: &ExperimentSpec,
    train_split: &LabeledCorpus,
    resources: &MatrixResources,
) -> Result<EmbeddingBackend> {
    match spec.backend {
        BackendKind::WordStatic | BackendKind::SubwordStatic => {
            let mut sgns = resources.sgns.clone();
            sgns.seed = spec.seed;
            sgns.subword = match spec.backend {
                BackendKind::SubwordStatic => Some(resources.ngram_range),
                _ => None,
            };
            let table = acquire_static_table(TableSource::TrainOnCorpus(train_split), &sgns)?;
            Ok(match spec.backend {
                BackendKind::SubwordStatic => EmbeddingBackend::SubwordStatic(table),
                _ => EmbeddingBackend::WordStatic(table),
            })
        }
        BackendKind::Contextual => match &resources.encoder {
            Some(EncoderProvider::CheckpointPath(path)) => {
                Ok(EmbeddingBackend::Contextual(ContextualEncoder::load(path)?))
            }
            Some(EncoderProvider::RandomInit { config }) => {
                let sentences: Vec<Vec<String>> = train_split
                    .entries()
                    .iter()
                    .map(|e| crate::text::word_tokens(&e.text))
                    .collect();
                let pieces = ContextualEncoder::pieces_from_sentences(&sentences);
                Ok(EmbeddingBackend::Contextual(ContextualEncoder::random_init(
                    pieces,
                    config.clone(),
                    spec.seed,
                )?))
            }
            None => Err(Error::Config(
                "contextual cells need an encoder checkpoint or encoder_init = random".into(),
            )),
        },
    }
}

fn run_cell(
    spec: &ExperimentSpec,
    splits: &SplitCorpus,
    resources: &MatrixResources,
    out_dir: Option<&Path>,
) -> Result<(f64, EvaluationReport, TrainingHistory, Option<CellArtifacts>)> {
    let backend = build_backend(spec, &splits.train, resources)?;
    let head = HeadConfig::published(spec.head, spec.arity);
    let mut model = ClassifierModel::build(
        backend,
        head,
        spec.arity.num_classes(),
        resources.feature_mode,
        spec.seed,
    )?;
    let history = train(&mut model, splits, &spec.train)?;
    let report = evaluate(&model, &splits.test)?;
    let artifacts = match out_dir {
        Some(dir) => {
            let cell_dir = dir.join(format!(
                "cell_{}class_{}_{}",
                spec.arity, spec.backend, spec.head
            ));
            std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
            let checkpoint = cell_dir.join("checkpoint.json");
            save_checkpoint(&model, &checkpoint, Some(&spec.train), Vec::new())?;
            let report_path = cell_dir.join("report.json");
            write_json(&report_path, &report)?;
            let history_path = cell_dir.join("history.json");
            write_json(&history_path, &history)?;
            let manifest_path = cell_dir.join("manifest.json");
            let mut config = std::collections::BTreeMap::new();
            config.insert("backend".to_string(), spec.backend.to_string());
            config.insert("head".to_string(), spec.head.to_string());
            config.insert("arity".to_string(), spec.arity.to_string());
            config.insert(
                "learning_rate".to_string(),
                spec.train.learning_rate.to_string(),
            );
            config.insert("batch_size".to_string(), spec.train.batch_size.to_string());
            config.insert("max_epochs".to_string(), spec.train.max_epochs.to_string());
            config.insert("patience".to_string(), spec.train.patience.to_string());
            config.insert(
                "l2_coefficient".to_string(),
                spec.train.l2_coefficient.to_string(),
            );
            crate::manifest::RunManifest::new("matrix-cell", spec.seed, config)
                .with_output(&checkpoint)
                .with_output(&report_path)
                .with_output(&history_path)
                .write(&manifest_path)?;
            Some(CellArtifacts {
                directory: cell_dir.display().to_string(),
                checkpoint: checkpoint.display().to_string(),
                report: report_path.display().to_string(),
                history: history_path.display().to_string(),
                manifest: manifest_path.display().to_string(),
            })
        }
        None => None,
    };
    Ok((report.accuracy, report, history, artifacts))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Checkpoint(format!("serialising {}: {e}", path.display())))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Trains and evaluates every spec; failures are recorded per cell with
/// diagnostics instead of aborting the matrix. Cells run sequentially with
/// fully isolated state.
pub fn run_matrix(
    specs: &[ExperimentSpec],
    splits2: Option<&SplitCorpus>,
    splits3: Option<&SplitCorpus>,
    resources: &MatrixResources,
    out_dir: Option<&Path>,
) -> Result<ResultMatrix> {
    if specs.is_empty() {
        return Err(Error::Validation("no matrix cells requested".into()));
    }
    let mut cells = Vec::with_capacity(specs.len());
    for spec in specs {
        let splits = match spec.arity {
            TaskArity::Two => splits2,
            TaskArity::Three => splits3,
        };
        let outcome = match splits {
            None => CellOutcome::Failed {
                error: format!("no {}-class splits supplied", spec.arity),
            },
            Some(splits) => match run_cell(spec, splits, resources, out_dir) {
                Ok((accuracy, report, history, artifacts)) => CellOutcome::Completed {
                    accuracy,
                    report,
                    history,
                    artifacts,
                },
                Err(e) => CellOutcome::Failed {
                    error: e.to_string(),
                },
            },
        };
        cells.push(MatrixCell {
            spec: spec.clone(),
            outcome,
        });
    }
    Ok(ResultMatrix { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledComment;
    use std::cell::RefCell;
    use std::collections::HashMap;

    /// Stub that answers from a fixed text -> label map.
    struct MapStub {
        map: HashMap<String, SentimentLabel>,
        classes: usize,
    }

    impl SentimentClassifier for MapStub {
        fn num_classes(&self) -> usize {
            self.classes
        }
        fn predict_label(&self, text: &str) -> Result<SentimentLabel> {
            Ok(self.map[text])
        }
    }

    fn corpus_of(labels: &[SentimentLabel], arity: TaskArity) -> LabeledCorpus {
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabeledComment {
                id: format!("e{i}"),
                topic: "Sports".into(),
                text: format!("বাক্য {i}"),
                label,
            })
            .collect();
        LabeledCorpus::new(entries, arity).unwrap()
    }

    #[test]
    fn perfect_stub_scores_accuracy_one_with_diagonal_confusion() {
        use SentimentLabel::*;
        let labels = [Negative, Neutral, Positive, Positive, Negative];
        let corpus = corpus_of(&labels, TaskArity::Three);
        let map = corpus
            .entries()
            .iter()
            .map(|e| (e.text.clone(), e.label))
            .collect();
        let stub = MapStub { map, classes: 3 };
        let report = evaluate(&stub, &corpus).unwrap();
        assert_eq!(report.accuracy, 1.0);
        for (i, row) in report.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(v, 0);
                }
            }
        }
    }

    /// Uniform random stub with interior mutability.
    struct RandomStub {
        rng: RefCell<rand_chacha::ChaCha20Rng>,
    }

    impl SentimentClassifier for RandomStub {
        fn num_classes(&self) -> usize {
            3
        }
        fn predict_label(&self, _text: &str) -> Result<SentimentLabel> {
            use rand::Rng;
            let code = self.rng.borrow_mut().gen_range(0..3);
            Ok(SentimentLabel::from_code(code).unwrap())
        }
    }

    #[test]
    fn random_stub_scores_near_chance_on_balanced_data() {
        use rand::SeedableRng;
        use SentimentLabel::*;
        let mut labels = Vec::new();
        for _ in 0..300 {
            labels.extend([Negative, Neutral, Positive]);
        }
        let corpus = corpus_of(&labels, TaskArity::Three);
        let stub = RandomStub {
            rng: RefCell::new(rand_chacha::ChaCha20Rng::seed_from_u64(1234)),
        };
        let report = evaluate(&stub, &corpus).unwrap();
        // Binomial(n, 1/3): three sigma around the mean.
        let n = corpus.len() as f64;
        let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)).sqrt() / n;
        assert!(
            (report.accuracy - 1.0 / 3.0).abs() < 3.0 * sigma,
            "accuracy {} outside 3 sigma of 1/3",
            report.accuracy
        );
    }

    #[test]
    fn confusion_conserves_counts_and_supports() {
        use rand::{Rng, SeedableRng};
        use SentimentLabel::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let labels: Vec<SentimentLabel> = (0..80)
            .map(|_| [Negative, Neutral, Positive][rng.gen_range(0..3)])
            .collect();
        let corpus = corpus_of(&labels, TaskArity::Three);
        let stub = RandomStub {
            rng: RefCell::new(rand_chacha::ChaCha20Rng::seed_from_u64(8)),
        };
        let report = evaluate(&stub, &corpus).unwrap();
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, corpus.len());
        let dist = corpus.label_distribution();
        for metrics in &report.per_class {
            assert_eq!(metrics.support, dist[&metrics.label]);
        }
    }

    #[test]
    fn accuracy_matches_brute_force_loop() {
        use rand::{Rng, SeedableRng};
        use SentimentLabel::*;
        for trial in 0..10 {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(trial);
            let n = rng.gen_range(1..=100);
            let labels: Vec<SentimentLabel> = (0..n)
                .map(|_| [Negative, Neutral, Positive][rng.gen_range(0..3)])
                .collect();
            let corpus = corpus_of(&labels, TaskArity::Three);
            let preds: HashMap<String, SentimentLabel> = corpus
                .entries()
                .iter()
                .map(|e| {
                    let label = [Negative, Neutral, Positive][rng.gen_range(0..3)];
                    (e.text.clone(), label)
                })
                .collect();
            let stub = MapStub {
                map: preds.clone(),
                classes: 3,
            };
            let report = evaluate(&stub, &corpus).unwrap();
            // Independent oracle: plain comparison loop.
            let mut correct = 0usize;
            for e in corpus.entries() {
                if preds[&e.text] == e.label {
                    correct += 1;
                }
            }
            assert_eq!(report.accuracy, correct as f64 / corpus.len() as f64);
        }
    }

    #[test]
    fn zero_denominator_metrics_are_flagged_zero() {
        use SentimentLabel::*;
        let corpus = corpus_of(&[Negative, Positive, Positive], TaskArity::Two);
        let map = corpus
            .entries()
            .iter()
            .map(|e| (e.text.clone(), Negative))
            .collect();
        let stub = MapStub { map, classes: 2 };
        let report = evaluate(&stub, &corpus).unwrap();
        let positive = &report.per_class[1];
        assert_eq!(positive.precision, 0.0);
        assert!(!positive.precision_defined);
        assert_eq!(positive.recall, 0.0);
        assert!(positive.recall_defined); // support > 0, recall genuinely 0
        assert!(!positive.f1_defined);
        assert!(report.render_text().contains("zero denominator"));
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let corpus = LabeledCorpus::new(Vec::new(), TaskArity::Two).unwrap();
        let stub = MapStub {
            map: HashMap::new(),
            classes: 2,
        };
        assert!(evaluate(&stub, &corpus).is_err());
    }

    #[test]
    fn evaluate_is_pure() {
        use SentimentLabel::*;
        let corpus = corpus_of(&[Negative, Positive], TaskArity::Two);
        let map: HashMap<String, SentimentLabel> = corpus
            .entries()
            .iter()
            .map(|e| (e.text.clone(), Positive))
            .collect();
        let stub = MapStub { map, classes: 2 };
        let a = evaluate(&stub, &corpus).unwrap();
        let b = evaluate(&stub, &corpus).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cell_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..18).map(|i| derive_cell_seed(42, i)).collect();
        let unique: std::collections::HashSet<u64> = seeds.iter().copied().collect();
        assert_eq!(unique.len(), 18);
        assert_eq!(derive_cell_seed(42, 0), derive_cell_seed(42, 0));
        assert_ne!(derive_cell_seed(42, 0), derive_cell_seed(43, 0));
    }

    #[test]
    fn build_specs_covers_the_cross_product_in_render_order() {
        let base = TrainConfig::default_for(BackendKind::WordStatic);
        let specs = build_specs(
            &BackendKind::ALL,
            &HeadKind::ALL,
            &[TaskArity::Two, TaskArity::Three],
            &base,
            false,
            1,
        );
        assert_eq!(specs.len(), 18);
        assert_eq!(specs[0].arity, TaskArity::Two);
        assert_eq!(specs[0].backend, BackendKind::WordStatic);
        assert_eq!(specs[0].head, HeadKind::Gru);
        // Contextual cells pick the contextual default learning rate.
        let contextual = specs.iter().find(|s| s.backend == BackendKind::Contextual).unwrap();
        assert_eq!(contextual.train.learning_rate, 2e-5);
    }

    #[test]
    fn failed_cells_are_recorded_not_dropped() {
        let splits = crate::synth::separable_splits(TaskArity::Two, (4, 2, 2), 3);
        let base = TrainConfig {
            max_epochs: 1,
            patience: 0,
            batch_size: 8,
            ..TrainConfig::default_for(BackendKind::Contextual)
        };
        let specs = build_specs(
            &[BackendKind::Contextual],
            &[HeadKind::Cnn],
            &[TaskArity::Two],
            &base,
            true,
            5,
        );
        // No encoder provider: the contextual cell must fail in isolation.
        let matrix = run_matrix(&specs, Some(&splits), None, &MatrixResources::default(), None).unwrap();
        assert_eq!(matrix.cells.len(), 1);
        assert!(matches!(matrix.cells[0].outcome, CellOutcome::Failed { .. }));
        let csv = matrix.render_csv().unwrap();
        assert!(csv.contains("failed"));
    }

    #[test]
    fn empty_matrix_render_is_an_error() {
        let matrix = ResultMatrix { cells: Vec::new() };
        assert!(matrix.render_text().is_err());
        assert!(matrix.render_csv().is_err());
    }
}
