//! Classifier assembly: embedding backend -> head (GRU | LSTM | CNN) ->
//! dense reduction -> softmax, with the published per-task hyperparameters.

mod heads;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SentimentLabel, TaskArity};
use crate::embed::{EmbeddedSequence, EmbeddingBackend, TokenSequence};
use crate::error::Error;
use crate::nn::{softmax_mat, uniform_fan_in, Bindings, Graph, ParamStore, Var};
use crate::{Result, MAX_SEQUENCE_LEN};

use heads::{head_feature, HeadCtx};

/// The three head families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Gru,
    Lstm,
    Cnn,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Gru, HeadKind::Lstm, HeadKind::Cnn];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Gru => "gru",
            HeadKind::Lstm => "lstm",
            HeadKind::Cnn => "cnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gru" => Some(HeadKind::Gru),
            "lstm" => Some(HeadKind::Lstm),
            "cnn" => Some(HeadKind::Cnn),
            _ => None,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bidirectional recurrent head shape. `per_word_width` is the total output
/// width per position (half per direction); every stacked layer uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnSpec {
    pub layers: usize,
    pub per_word_width: usize,
    pub dropout: f64,
}

/// Whether convolution layers stack (each feeding the next) or run as
/// parallel branches pooled independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CnnMode {
    Stacked,
    Parallel,
}

/// Convolutional head shape; `kernel_sizes` and `filter_counts` are paired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub kernel_sizes: Vec<usize>,
    pub filter_counts: Vec<usize>,
    pub mode: CnnMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadSpec {
    Gru(RnnSpec),
    Lstm(RnnSpec),
    Cnn(CnnSpec),
}

/// A head plus the task arity it is configured for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub arity: TaskArity,
    pub spec: HeadSpec,
}

impl HeadConfig {
    /// The published per-task configurations: 2-class GRU 1x300 (dropout
    /// 0.5), 3-class GRU 2x350 (dropout 0.5), 2-class LSTM 3 layers with
    /// per-direction cell width 100 (per-word 200), 3-class LSTM 1x512,
    /// 2-class CNN stacked kernels [3,3] with [64,100] filters, 3-class CNN
    /// parallel kernels [1,2,3,4] with 200 filters each.
    pub fn published(kind: HeadKind, arity: TaskArity) -> HeadConfig {
        let spec = match (kind, arity) {
            (HeadKind::Gru, TaskArity::Two) => HeadSpec::Gru(RnnSpec {
                layers: 1,
                per_word_width: 300,
                dropout: 0.5,
            }),
            (HeadKind::Gru, TaskArity::Three) => HeadSpec::Gru(RnnSpec {
                layers: 2,
                per_word_width: 350,
                dropout: 0.5,
            }),
            (HeadKind::Lstm, TaskArity::Two) => HeadSpec::Lstm(RnnSpec {
                layers: 3,
                per_word_width: 200,
                dropout: 0.5,
            }),
            (HeadKind::Lstm, TaskArity::Three) => HeadSpec::Lstm(RnnSpec {
                layers: 1,
                per_word_width: 512,
                dropout: 0.5,
            }),
            (HeadKind::Cnn, TaskArity::Two) => HeadSpec::Cnn(CnnSpec {
                kernel_sizes: vec![3, 3],
                filter_counts: vec![64, 100],
                mode: CnnMode::Stacked,
            }),
            (HeadKind::Cnn, TaskArity::Three) => HeadSpec::Cnn(CnnSpec {
                kernel_sizes: vec![1, 2, 3, 4],
                filter_counts: vec![200; 4],
                mode: CnnMode::Parallel,
            }),
        };
        HeadConfig { arity, spec }
    }

    pub fn kind(&self) -> HeadKind {
        match self.spec {
            HeadSpec::Gru(_) => HeadKind::Gru,
            HeadSpec::Lstm(_) => HeadKind::Lstm,
            HeadSpec::Cnn(_) => HeadKind::Cnn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.spec {
            HeadSpec::Gru(spec) | HeadSpec::Lstm(spec) => {
                if spec.layers == 0 {
                    return Err(Error::Shape("recurrent head needs at least one layer".into()));
                }
                if spec.per_word_width == 0 || spec.per_word_width % 2 != 0 {
                    return Err(Error::Shape(format!(
                        "bidirectional per-word width must be positive and even, got {}",
                        spec.per_word_width
                    )));
                }
                if !(0.0..1.0).contains(&spec.dropout) {
                    return Err(Error::Shape(format!(
                        "dropout must be in [0, 1), got {}",
                        spec.dropout
                    )));
                }
            }
            HeadSpec::Cnn(spec) => {
                if spec.kernel_sizes.is_empty()
                    || spec.kernel_sizes.len() != spec.filter_counts.len()
                {
                    return Err(Error::Shape(
                        "kernel_sizes and filter_counts must be non-empty and paired".into(),
                    ));
                }
                if spec
                    .kernel_sizes
                    .iter()
                    .any(|&k| k == 0 || k > MAX_SEQUENCE_LEN)
                {
                    return Err(Error::Shape("kernel sizes must be in 1..=128".into()));
                }
                if spec.filter_counts.contains(&0) {
                    return Err(Error::Shape("filter counts must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Width of one position's head output (RNN) or of the pooled vector (CNN).
    pub fn output_width(&self) -> usize {
        match &self.spec {
            HeadSpec::Gru(spec) | HeadSpec::Lstm(spec) => spec.per_word_width,
            HeadSpec::Cnn(spec) => match spec.mode {
                CnnMode::Stacked => *spec.filter_counts.last().expect("validated non-empty"),
                CnnMode::Parallel => spec.filter_counts.iter().sum(),
            },
        }
    }

    /// Width of the feature vector entering the dense layer.
    pub fn feature_width(&self, mode: FeatureMode) -> usize {
        match &self.spec {
            HeadSpec::Gru(_) | HeadSpec::Lstm(_) => match mode {
                FeatureMode::ConcatPositions => MAX_SEQUENCE_LEN * self.output_width(),
                FeatureMode::FinalState => self.output_width(),
            },
            HeadSpec::Cnn(_) => self.output_width(),
        }
    }

    fn describe(&self) -> String {
        match &self.spec {
            HeadSpec::Gru(s) => format!(
                "gru(layers={}, per_word_width={}, dropout={})",
                s.layers, s.per_word_width, s.dropout
            ),
            HeadSpec::Lstm(s) => format!(
                "lstm(layers={}, per_word_width={}, dropout={})",
                s.layers, s.per_word_width, s.dropout
            ),
            HeadSpec::Cnn(s) => format!(
                "cnn(kernels={:?}, filters={:?}, {})",
                s.kernel_sizes,
                s.filter_counts,
                match s.mode {
                    CnnMode::Stacked => "stacked",
                    CnnMode::Parallel => "parallel",
                }
            ),
        }
    }
}

/// How recurrent per-position outputs become the feature vector: concatenate
/// all 128 (zero-padded) positions, or use the final hidden states only.
/// Convolutional heads always pool and ignore this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    ConcatPositions,
    FinalState,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::ConcatPositions => "concat_positions",
            FeatureMode::FinalState => "final_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "concat_positions" => Some(FeatureMode::ConcatPositions),
            "final_state" => Some(FeatureMode::FinalState),
            _ => None,
        }
    }
}

/// Anything that can label a text; the seam lets tests use stub models.
pub trait SentimentClassifier {
    fn num_classes(&self) -> usize;
    fn predict_label(&self, text: &str) -> Result<SentimentLabel>;
}

/// One entry of the parameter-count manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub count: usize,
}

/// Machine-readable record of every trainable matrix in a built model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamManifest {
    pub backend: String,
    pub head: String,
    pub num_classes: usize,
    pub feature_mode: FeatureMode,
    pub dense_input_width: usize,
    pub total_parameters: usize,
    pub entries: Vec<ManifestEntry>,
}

/// Input to the forward graph: precomputed embeddings, or raw token ids when
/// fine-tuning the contextual encoder inside the graph.
pub(crate) enum ModelInput<'a> {
    Embedded(&'a EmbeddedSequence),
    Tokens(&'a TokenSequence),
}

/// A forward-ready classifier.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    backend: EmbeddingBackend,
    head: HeadConfig,
    num_classes: usize,
    feature_mode: FeatureMode,
    params: ParamStore,
    seed: u64,
    trained: bool,
}

impl ClassifierModel {
    /// Assembles a model, initialising head and dense weights from `seed`
    /// (uniform fan-in scaling). The contextual backend's parameters join
    /// the model's store so fine-tuning and checkpointing see them.
    pub fn build(
        backend: EmbeddingBackend,
        head: HeadConfig,
        num_classes: usize,
        feature_mode: FeatureMode,
        seed: u64,
    ) -> Result<Self> {
        head.validate()?;
        if head.arity.num_classes() != num_classes {
            return Err(Error::ArityMismatch {
                message: format!(
                    "head configured for {} classes, model asked for {num_classes}",
                    head.arity.num_classes()
                ),
            });
        }
        let d = backend.dimension();
        if d == 0 {
            return Err(Error::Shape("backend dimension must be positive".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        init_head_params(&mut params, &head, d, &mut rng);
        let feature_width = head.feature_width(feature_mode);
        params.insert("dense.w", uniform_fan_in(&mut rng, feature_width, num_classes));
        params.insert("dense.b", crate::nn::Mat::zeros((1, num_classes)));
        if let EmbeddingBackend::Contextual(encoder) = &backend {
            for (name, mat) in encoder.params().iter() {
                params.insert(name.clone(), mat.clone());
            }
        }
        Ok(ClassifierModel {
            backend,
            head,
            num_classes,
            feature_mode,
            params,
            seed,
            trained: false,
        })
    }

    /// Reassembles a model from checkpoint pieces without re-initialising.
    pub(crate) fn from_checkpoint_parts(
        backend: EmbeddingBackend,
        head: HeadConfig,
        num_classes: usize,
        feature_mode: FeatureMode,
        params: ParamStore,
        seed: u64,
        trained: bool,
    ) -> Result<Self> {
        head.validate()?;
        if head.arity.num_classes() != num_classes {
            return Err(Error::ArityMismatch {
                message: "checkpoint head arity does not match its class count".into(),
            });
        }
        // Shape-check against a freshly built skeleton.
        let skeleton = ClassifierModel::build(backend.clone(), head.clone(), num_classes, feature_mode, 0)?;
        for (name, mat) in skeleton.params.iter() {
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
        let mut model = ClassifierModel {
            backend,
            head,
            num_classes,
            feature_mode,
            params,
            seed,
            trained,
        };
        model.sync_encoder_params()?;
        Ok(model)
    }

    pub fn backend(&self) -> &EmbeddingBackend {
        &self.backend
    }

    pub fn head(&self) -> &HeadConfig {
        &self.head
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn arity(&self) -> TaskArity {
        self.head.arity
    }

    pub fn feature_mode(&self) -> FeatureMode {
        self.feature_mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Names of parameters the optimizer may update. The pre-trained encoder
    /// is included only when fine-tuning.
    pub fn trainable_names(&self, fine_tune_encoder: bool) -> Vec<String> {
        self.params
            .names()
            .filter(|n| fine_tune_encoder || !n.starts_with("encoder."))
            .cloned()
            .collect()
    }

    /// Pushes (possibly fine-tuned) encoder parameters back into the backend
    /// so standalone embedding uses the same weights.
    pub(crate) fn sync_encoder_params(&mut self) -> Result<()> {
        if let EmbeddingBackend::Contextual(encoder) = &mut self.backend {
            let mut fresh = ParamStore::new();
            for (name, mat) in self.params.iter() {
                if name.starts_with("encoder.") {
                    fresh.insert(name.clone(), mat.clone());
                }
            }
            encoder.set_params(fresh)?;
        }
        Ok(())
    }

    /// Parameter-count manifest of the built model.
    pub fn parameter_manifest(&self) -> ParamManifest {
        let entries: Vec<ManifestEntry> = self
            .params
            .iter()
            .map(|(name, m)| ManifestEntry {
                name: name.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
                count: m.len(),
            })
            .collect();
        ParamManifest {
            backend: self.backend.identifier(),
            head: self.head.describe(),
            num_classes: self.num_classes,
            feature_mode: self.feature_mode,
            dense_input_width: self.head.feature_width(self.feature_mode),
            total_parameters: entries.iter().map(|e| e.count).sum(),
            entries,
        }
    }

    /// Builds the logits subgraph for one input; used by both scoring and
    /// the training loop.
    pub(crate) fn graph_logits(
        &self,
        g: &mut Graph,
        bind: &mut Bindings,
        input: ModelInput<'_>,
        dropout_rng: Option<&mut ChaCha20Rng>,
    ) -> Result<Var> {
        let (x, n) = match input {
            ModelInput::Embedded(emb) => {
                if emb.dim() != self.backend.dimension() {
                    return Err(Error::Shape(format!(
                        "embedded dimension {} does not match backend dimension {}",
                        emb.dim(),
                        self.backend.dimension()
                    )));
                }
                let n = emb.real_len();
                (g.constant(emb.real_rows()), n)
            }
            ModelInput::Tokens(seq) => {
                let encoder = match &self.backend {
                    EmbeddingBackend::Contextual(encoder) => encoder,
                    _ => {
                        return Err(Error::Shape(
                            "token-id input is only valid for the contextual backend".into(),
                        ))
                    }
                };
                let n = seq.real_len();
                let ids = &seq.ids()[..n];
                (encoder.graph_forward(g, bind, &self.params, ids), n)
            }
        };
        let mut ctx = HeadCtx {
            g,
            bind,
            params: &self.params,
            dropout_rng,
        };
        let feature = head_feature(&mut ctx, &self.head, x, n, self.feature_mode);
        let w = bind.var(g, &self.params, "dense.w");
        let b = bind.var(g, &self.params, "dense.b");
        let proj = g.matmul(feature, w);
        Ok(g.add_row(proj, b))
    }

    /// Evaluation-mode logits subgraph for one embedded input, for callers
    /// that differentiate a loss through the model (gradient checks).
    pub fn logits_graph(
        &self,
        g: &mut Graph,
        bind: &mut Bindings,
        input: &EmbeddedSequence,
    ) -> Result<Var> {
        self.graph_logits(g, bind, ModelInput::Embedded(input), None)
    }

    /// Class probabilities for a batch of embedded sequences (evaluation
    /// mode, no dropout). Each output row sums to 1.
    pub fn forward_batch(&self, inputs: &[EmbeddedSequence]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for emb in inputs {
            let mut g = Graph::new();
            let mut bind = Bindings::new();
            let logits = self.graph_logits(&mut g, &mut bind, ModelInput::Embedded(emb), None)?;
            let row = g.value(logits);
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "forward logits".into(),
                });
            }
            let probs = softmax_mat(row);
            out.push(probs.row(0).to_vec());
        }
        Ok(out)
    }

    /// Probabilities for one text through the model's own embedding path.
    pub fn probabilities(&self, raw: &str) -> Result<Vec<f64>> {
        let emb = self.backend.embed_text(raw)?;
        Ok(self.forward_batch(std::slice::from_ref(&emb))?.remove(0))
    }

    /// Argmax label; ties resolve to the lowest class code. Requires a
    /// trained model.
    pub fn predict(&self, raw: &str) -> Result<SentimentLabel> {
        if !self.trained {
            return Err(Error::Validation(
                "model is untrained; train it or use predict_allow_untrained".into(),
            ));
        }
        self.predict_allow_untrained(raw)
    }

    /// Argmax label without the trained-model requirement.
    pub fn predict_allow_untrained(&self, raw: &str) -> Result<SentimentLabel> {
        let probs = self.probabilities(raw)?;
        Ok(argmax_label(&probs, self.head.arity))
    }
}

impl SentimentClassifier for ClassifierModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_label(&self, text: &str) -> Result<SentimentLabel> {
        self.predict_allow_untrained(text)
    }
}

/// First maximum wins, so exact ties go to the lowest class code.
pub fn argmax_label(probs: &[f64], arity: TaskArity) -> SentimentLabel {
    let labels = arity.class_labels();
    assert_eq!(probs.len(), labels.len());
    let mut best = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = idx;
        }
    }
    labels[best]
}

fn init_head_params(
    params: &mut ParamStore,
    head: &HeadConfig,
    input_dim: usize,
    rng: &mut ChaCha20Rng,
) {
    match &head.spec {
        HeadSpec::Gru(spec) => init_rnn(params, "head.gru", &["z", "r", "n"], spec, input_dim, rng),
        HeadSpec::Lstm(spec) => {
            init_rnn(params, "head.lstm", &["i", "f", "g", "o"], spec, input_dim, rng)
        }
        HeadSpec::Cnn(spec) => {
            for (idx, (&k, &f)) in spec.kernel_sizes.iter().zip(&spec.filter_counts).enumerate() {
                let (prefix, in_width) = match spec.mode {
                    CnnMode::Stacked => (
                        format!("head.cnn.layer{idx}"),
                        if idx == 0 {
                            input_dim
                        } else {
                            spec.filter_counts[idx - 1]
                        },
                    ),
                    CnnMode::Parallel => (format!("head.cnn.branch{idx}"), input_dim),
                };
                params.insert(format!("{prefix}.w"), uniform_fan_in(rng, k * in_width, f));
                params.insert(format!("{prefix}.b"), crate::nn::Mat::zeros((1, f)));
            }
        }
    }
}

fn init_rnn(
    params: &mut ParamStore,
    prefix: &str,
    gates: &[&str],
    spec: &RnnSpec,
    input_dim: usize,
    rng: &mut ChaCha20Rng,
) {
    let hidden = spec.per_word_width / 2;
    for layer in 0..spec.layers {
        let in_width = if layer == 0 {
            input_dim
        } else {
            spec.per_word_width
        };
        for dir in ["fwd", "bwd"] {
            for gate in gates {
                let p = format!("{prefix}.l{layer}.{dir}.{gate}");
                params.insert(format!("{p}.w"), uniform_fan_in(rng, in_width, hidden));
                params.insert(format!("{p}.u"), uniform_fan_in(rng, hidden, hidden));
                params.insert(format!("{p}.b"), crate::nn::Mat::zeros((1, hidden)));
            }
        }
    }
}
