//! Flat, typed key-value run configuration.
//!
//! The file format is one `key = value` per line, `#` comments, and
//! `include <path>` directives (relative to the including file). Later
//! assignments override earlier ones, so a file can include a base config
//! and override a few keys; command-line `--set key=value` pairs override
//! file values. Unknown keys are rejected.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::corpus::TaskArity;
use crate::embed::{BackendKind, EncoderConfig, SgnsConfig};
use crate::error::Error;
use crate::model::{FeatureMode, HeadKind};
use crate::train::TrainConfig;
use crate::Result;

/// Raw key-value pairs after include expansion, in last-assignment order.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: IndexMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Applies `key=value` override pairs (e.g. from the command line).
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("override {pair:?} is not of the form key=value"))
            })?;
            self.set(key.trim(), value.trim());
        }
        Ok(())
    }
}

/// Parses a config file, expanding includes depth-first with cycle detection.
pub fn parse_config_file(path: impl AsRef<Path>) -> Result<RawConfig> {
    let mut raw = RawConfig::new();
    let mut visited = HashSet::new();
    load_into(path.as_ref(), &mut raw, &mut visited)?;
    Ok(raw)
}

fn load_into(path: &Path, raw: &mut RawConfig, visited: &mut HashSet<PathBuf>) -> Result<()> {
    let canonical = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    if !visited.insert(canonical) {
        return Err(Error::Config(format!(
            "include cycle through {}",
            path.display()
        )));
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("include ") {
            let target = base.join(rest.trim());
            load_into(&target, raw, visited)?;
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected `key = value` or `include <path>`, got {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        raw.set(key.trim(), value.trim());
    }
    Ok(())
}

/// Fully typed and validated run configuration with defaults made explicit.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub arity: Option<TaskArity>,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub train_path_2class: Option<PathBuf>,
    pub valid_path_2class: Option<PathBuf>,
    pub test_path_2class: Option<PathBuf>,
    pub train_path_3class: Option<PathBuf>,
    pub valid_path_3class: Option<PathBuf>,
    pub test_path_3class: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub head: Option<HeadKind>,
    pub feature_mode: FeatureMode,
    pub embedding_dim: usize,
    pub sgns_window: usize,
    pub sgns_epochs: usize,
    pub sgns_negative: usize,
    pub sgns_learning_rate: f64,
    pub min_count: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub vectors_path: Option<PathBuf>,
    pub encoder_checkpoint: Option<PathBuf>,
    pub encoder_init_random: bool,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub encoder_ff_dim: usize,
    /// `None` selects the backend-specific default at use time.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2_coefficient: f64,
    pub seed: u64,
    pub fine_tune_encoder: bool,
    pub matrix_backends: Vec<BackendKind>,
    pub matrix_heads: Vec<HeadKind>,
    pub matrix_arities: Vec<TaskArity>,
    pub categories: Vec<String>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arity: None,
            train_path: None,
            valid_path: None,
            test_path: None,
            train_path_2class: None,
            valid_path_2class: None,
            test_path_2class: None,
            train_path_3class: None,
            valid_path_3class: None,
            test_path_3class: None,
            backend: None,
            head: None,
            feature_mode: FeatureMode::ConcatPositions,
            embedding_dim: 300,
            sgns_window: 5,
            sgns_epochs: 5,
            sgns_negative: 5,
            sgns_learning_rate: 0.025,
            min_count: 1,
            ngram_min: 3,
            ngram_max: 6,
            vectors_path: None,
            encoder_checkpoint: None,
            encoder_init_random: false,
            encoder_layers: 2,
            encoder_heads: 4,
            encoder_ff_dim: 64,
            learning_rate: None,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            l2_coefficient: 0.01,
            seed: 42,
            fine_tune_encoder: true,
            matrix_backends: BackendKind::ALL.to_vec(),
            matrix_heads: HeadKind::ALL.to_vec(),
            matrix_arities: vec![TaskArity::Two, TaskArity::Three],
            categories: vec![
                "politics".to_string(),
                "sports".to_string(),
                "religion".to_string(),
            ],
            out_dir: None,
        }
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {value:?}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {value:?}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

fn parse_csv<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        out.push(
            parse(item).ok_or_else(|| Error::Config(format!("{key}: invalid item {item:?}")))?,
        );
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

impl RunConfig {
    /// Types, validates and defaults the raw pairs; unknown keys are errors.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in &raw.entries {
            match key.as_str() {
                "arity" => {
                    cfg.arity = Some(TaskArity::from_u8(parse_u64(key, value)? as u8)?);
                }
                "train_path" => cfg.train_path = Some(PathBuf::from(value)),
                "valid_path" => cfg.valid_path = Some(PathBuf::from(value)),
                "test_path" => cfg.test_path = Some(PathBuf::from(value)),
                "train_path_2class" => cfg.train_path_2class = Some(PathBuf::from(value)),
                "valid_path_2class" => cfg.valid_path_2class = Some(PathBuf::from(value)),
                "test_path_2class" => cfg.test_path_2class = Some(PathBuf::from(value)),
                "train_path_3class" => cfg.train_path_3class = Some(PathBuf::from(value)),
                "valid_path_3class" => cfg.valid_path_3class = Some(PathBuf::from(value)),
                "test_path_3class" => cfg.test_path_3class = Some(PathBuf::from(value)),
                "backend" => {
                    cfg.backend = Some(BackendKind::parse(value).ok_or_else(|| {
                        Error::Config(format!("backend: unknown backend {value:?}"))
                    })?);
                }
                "head" => {
                    cfg.head = Some(HeadKind::parse(value).ok_or_else(|| {
                        Error::Config(format!("head: unknown head {value:?}"))
                    })?);
                }
                "feature_mode" => {
                    cfg.feature_mode = FeatureMode::parse(value).ok_or_else(|| {
                        Error::Config(format!("feature_mode: unknown mode {value:?}"))
                    })?;
                }
                "embedding_dim" => cfg.embedding_dim = parse_usize(key, value)?,
                "sgns_window" => cfg.sgns_window = parse_usize(key, value)?,
                "sgns_epochs" => cfg.sgns_epochs = parse_usize(key, value)?,
                "sgns_negative" => cfg.sgns_negative = parse_usize(key, value)?,
                "sgns_learning_rate" => cfg.sgns_learning_rate = parse_f64(key, value)?,
                "min_count" => cfg.min_count = parse_usize(key, value)?,
                "ngram_min" => cfg.ngram_min = parse_usize(key, value)?,
                "ngram_max" => cfg.ngram_max = parse_usize(key, value)?,
                "vectors_path" => cfg.vectors_path = Some(PathBuf::from(value)),
                "encoder_checkpoint" => cfg.encoder_checkpoint = Some(PathBuf::from(value)),
                "encoder_init" => {
                    cfg.encoder_init_random = match value.as_str() {
                        "random" => true,
                        "none" => false,
                        _ => {
                            return Err(Error::Config(format!(
                                "encoder_init: expected random or none, got {value:?}"
                            )))
                        }
                    };
                }
                "encoder_layers" => cfg.encoder_layers = parse_usize(key, value)?,
                "encoder_heads" => cfg.encoder_heads = parse_usize(key, value)?,
                "encoder_ff_dim" => cfg.encoder_ff_dim = parse_usize(key, value)?,
                "learning_rate" => cfg.learning_rate = Some(parse_f64(key, value)?),
                "batch_size" => cfg.batch_size = parse_usize(key, value)?,
                "max_epochs" => cfg.max_epochs = parse_usize(key, value)?,
                "patience" => cfg.patience = parse_usize(key, value)?,
                "l2_coefficient" => cfg.l2_coefficient = parse_f64(key, value)?,
                "seed" => cfg.seed = parse_u64(key, value)?,
                "fine_tune_encoder" => cfg.fine_tune_encoder = parse_bool(key, value)?,
                "matrix_backends" => {
                    cfg.matrix_backends = parse_csv(key, value, BackendKind::parse)?;
                }
                "matrix_heads" => {
                    cfg.matrix_heads = parse_csv(key, value, HeadKind::parse)?;
                }
                "matrix_arities" => {
                    cfg.matrix_arities = parse_csv(key, value, |s| {
                        s.parse::<u8>().ok().and_then(|v| TaskArity::try_from(v).ok())
                    })?;
                }
                "categories" => {
                    cfg.categories = parse_csv(key, value, |s| Some(s.to_string()))?;
                }
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                _ => {
                    return Err(Error::Config(format!("unknown configuration key {key:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::Config(format!(
                "invalid n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        if let Some(lr) = self.learning_rate {
            if lr <= 0.0 {
                return Err(Error::Config(format!(
                    "learning_rate must be positive, got {lr}"
                )));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.l2_coefficient < 0.0 {
            return Err(Error::Config("l2_coefficient must be non-negative".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    /// Training settings for a given backend; the learning rate falls back
    /// to the backend default when not set explicitly.
    pub fn train_config(&self, backend: BackendKind) -> TrainConfig {
        let mut train = TrainConfig::default_for(backend);
        if let Some(lr) = self.learning_rate {
            train.learning_rate = lr;
        }
        train.batch_size = self.batch_size;
        train.max_epochs = self.max_epochs;
        train.patience = self.patience;
        train.l2_coefficient = self.l2_coefficient;
        train.seed = self.seed;
        train.fine_tune_encoder = self.fine_tune_encoder;
        train
    }

    /// Static-table training settings; `subword` selects the n-gram variant.
    pub fn sgns_config(&self, subword: bool) -> SgnsConfig {
        SgnsConfig {
            dim: self.embedding_dim,
            window: self.sgns_window,
            epochs: self.sgns_epochs,
            negative: self.sgns_negative,
            learning_rate: self.sgns_learning_rate,
            min_count: self.min_count,
            seed: self.seed,
            subword: subword.then_some((self.ngram_min, self.ngram_max)),
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.embedding_dim,
            layers: self.encoder_layers,
            heads: self.encoder_heads,
            ff_dim: self.encoder_ff_dim,
        }
    }

    /// Every setting made explicit, for the resolved-config echo and the
    /// run manifest.
    pub fn resolved_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        if let Some(arity) = self.arity {
            put("arity", arity.to_string());
        }
        for (key, value) in [
            ("train_path", &self.train_path),
            ("valid_path", &self.valid_path),
            ("test_path", &self.test_path),
            ("train_path_2class", &self.train_path_2class),
            ("valid_path_2class", &self.valid_path_2class),
            ("test_path_2class", &self.test_path_2class),
            ("train_path_3class", &self.train_path_3class),
            ("valid_path_3class", &self.valid_path_3class),
            ("test_path_3class", &self.test_path_3class),
            ("vectors_path", &self.vectors_path),
            ("encoder_checkpoint", &self.encoder_checkpoint),
            ("out_dir", &self.out_dir),
        ] {
            if let Some(path) = value {
                put(key, path.display().to_string());
            }
        }
        if let Some(backend) = self.backend {
            put("backend", backend.to_string());
        }
        if let Some(head) = self.head {
            put("head", head.to_string());
        }
        put("feature_mode", self.feature_mode.as_str().to_string());
        put("embedding_dim", self.embedding_dim.to_string());
        put("sgns_window", self.sgns_window.to_string());
        put("sgns_epochs", self.sgns_epochs.to_string());
        put("sgns_negative", self.sgns_negative.to_string());
        put("sgns_learning_rate", self.sgns_learning_rate.to_string());
        put("min_count", self.min_count.to_string());
        put("ngram_min", self.ngram_min.to_string());
        put("ngram_max", self.ngram_max.to_string());
        put(
            "encoder_init",
            if self.encoder_init_random { "random" } else { "none" }.to_string(),
        );
        put("encoder_layers", self.encoder_layers.to_string());
        put("encoder_heads", self.encoder_heads.to_string());
        put("encoder_ff_dim", self.encoder_ff_dim.to_string());
        if let Some(lr) = self.learning_rate {
            put("learning_rate", lr.to_string());
        }
        put("batch_size", self.batch_size.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("patience", self.patience.to_string());
        put("l2_coefficient", self.l2_coefficient.to_string());
        put("seed", self.seed.to_string());
        put("fine_tune_encoder", self.fine_tune_encoder.to_string());
        put(
            "matrix_backends",
            self.matrix_backends
                .iter()
                .map(|b| b.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        put(
            "matrix_heads",
            self.matrix_heads
                .iter()
                .map(|h| h.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        put(
            "matrix_arities",
            self.matrix_arities
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("categories", self.categories.join(","));
        map
    }

    /// Resolved configuration in the config-file syntax, reloadable as-is.
    pub fn render_resolved(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.resolved_map() {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_flat_keys_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "run.cfg",
            "# experiment\nbackend = word_static\nseed = 7\n\nhead = gru\n",
        );
        let raw = parse_config_file(&path).unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.backend, Some(BackendKind::WordStatic));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.head, Some(HeadKind::Gru));
    }

    #[test]
    fn include_then_override() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "base.cfg", "seed = 1\nbatch_size = 16\n");
        let path = write_file(dir.path(), "run.cfg", "include base.cfg\nseed = 9\n");
        let raw = parse_config_file(&path).unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.batch_size, 16);
    }

    #[test]
    fn include_cycle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.cfg", "include b.cfg\n");
        let path_a = dir.path().join("a.cfg");
        write_file(dir.path(), "b.cfg", "include a.cfg\n");
        assert!(matches!(
            parse_config_file(&path_a),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut raw = RawConfig::new();
        raw.set("learning_rte", "0.1");
        match RunConfig::from_raw(&raw) {
            Err(Error::Config(msg)) => assert!(msg.contains("learning_rte")),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn typed_values_are_validated() {
        for (key, value) in [
            ("seed", "abc"),
            ("arity", "4"),
            ("learning_rate", "-1"),
            ("batch_size", "0"),
            ("fine_tune_encoder", "yes"),
            ("matrix_heads", "gru,transformer"),
        ] {
            let mut raw = RawConfig::new();
            raw.set(key, value);
            assert!(RunConfig::from_raw(&raw).is_err(), "{key}={value} accepted");
        }
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut raw = RawConfig::new();
        raw.set("seed", "1");
        raw.apply_overrides(&["seed=5".to_string(), "head=cnn".to_string()])
            .unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.head, Some(HeadKind::Cnn));
        assert!(raw.apply_overrides(&["nonsense".to_string()]).is_err());
    }

    #[test]
    fn resolved_render_round_trips() {
        let mut raw = RawConfig::new();
        raw.set("backend", "subword_static");
        raw.set("arity", "2");
        raw.set("seed", "11");
        let cfg = RunConfig::from_raw(&raw).unwrap();
        let rendered = cfg.render_resolved();
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "resolved.cfg", &rendered);
        let back = RunConfig::from_raw(&parse_config_file(&path).unwrap()).unwrap();
        assert_eq!(back.backend, Some(BackendKind::SubwordStatic));
        assert_eq!(back.arity, Some(TaskArity::Two));
        assert_eq!(back.seed, 11);
        assert_eq!(back.batch_size, cfg.batch_size);
    }

    #[test]
    fn learning_rate_defaults_per_backend() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train_config(BackendKind::Contextual).learning_rate, 2e-5);
        assert_eq!(cfg.train_config(BackendKind::WordStatic).learning_rate, 1e-3);
        let mut raw = RawConfig::new();
        raw.set("learning_rate", "0.5");
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.train_config(BackendKind::Contextual).learning_rate, 0.5);
    }
}
