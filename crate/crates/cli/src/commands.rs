//! Command implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bsent_core::annotate;
use bsent_core::apply::{analyze_categories, load_categorized};
use bsent_core::config::{parse_config_file, RawConfig, RunConfig};
use bsent_core::corpus::{
    self, derive_two_class, load_corpus, load_splits, save_corpus, stratified_split, CorpusStats,
    TaskArity,
};
use bsent_core::embed::{
    acquire_static_table, BackendKind, ContextualEncoder, EmbeddingBackend, TableSource,
};
use bsent_core::error::Error;
use bsent_core::eval::{build_specs, evaluate as eval_report, run_matrix, EncoderProvider,
    EvaluationReport, MatrixResources};
use bsent_core::manifest::{file_digest, RunManifest};
use bsent_core::model::{ClassifierModel, HeadConfig};
use bsent_core::text;
use bsent_core::train::{load_checkpoint, save_checkpoint, train as run_training};
use bsent_core::Result;

use crate::{ConfigArgs, OutputFormat};

/// Creates the output directory; refuses to reuse a non-empty one unless
/// forced.
fn prepare_out_dir(path: &Path, force: bool) -> Result<()> {
    if path.exists() {
        let non_empty = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Validation(format!(
                "output directory {} is not empty; pass --force to overwrite",
                path.display()
            )));
        }
    }
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("serialising {}: {e}", path.display())))?;
    write_text(path, &json)
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut raw = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => RawConfig::new(),
    };
    raw.apply_overrides(&args.set)?;
    if let Some(seed) = args.seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(out) = &args.out {
        raw.set("out_dir", out.display().to_string());
    }
    RunConfig::from_raw(&raw)
}

fn require_path(value: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required configuration key {key:?}")))
}

/// Builds the configured backend, training static tables on the train split
/// when no vector file is supplied.
fn build_backend(cfg: &RunConfig, train_split: &corpus::LabeledCorpus) -> Result<EmbeddingBackend> {
    let backend = cfg
        .backend
        .ok_or_else(|| Error::Config("missing required configuration key \"backend\"".into()))?;
    match backend {
        BackendKind::WordStatic | BackendKind::SubwordStatic => {
            let subword = backend == BackendKind::SubwordStatic;
            let sgns = cfg.sgns_config(subword);
            let table = match &cfg.vectors_path {
                Some(path) => acquire_static_table(TableSource::LoadFromFile(path), &sgns)?,
                None => acquire_static_table(TableSource::TrainOnCorpus(train_split), &sgns)?,
            };
            Ok(if subword {
                EmbeddingBackend::SubwordStatic(table)
            } else {
                EmbeddingBackend::WordStatic(table)
            })
        }
        BackendKind::Contextual => {
            if let Some(path) = &cfg.encoder_checkpoint {
                return Ok(EmbeddingBackend::Contextual(ContextualEncoder::load(path)?));
            }
            if cfg.encoder_init_random {
                let sentences: Vec<Vec<String>> = train_split
                    .entries()
                    .iter()
                    .map(|e| text::word_tokens(&e.text))
                    .collect();
                let pieces = ContextualEncoder::pieces_from_sentences(&sentences);
                return Ok(EmbeddingBackend::Contextual(ContextualEncoder::random_init(
                    pieces,
                    cfg.encoder_config(),
                    cfg.seed,
                )?));
            }
            Err(Error::Config(
                "contextual backend needs encoder_checkpoint or encoder_init = random".into(),
            ))
        }
    }
}

pub fn ingest(
    input: &Path,
    arity: u8,
    make_two_class: bool,
    split: bool,
    seed: Option<u64>,
    out: &Path,
    force: bool,
) -> Result<()> {
    let arity = TaskArity::from_u8(arity)?;
    let corpus = load_corpus(input, arity)?;
    prepare_out_dir(out, force)?;
    let canonical = out.join("corpus.tsv");
    save_corpus(&corpus, &canonical)?;

    let mut summary = BTreeMap::new();
    summary.insert("entries".to_string(), corpus.len().to_string());
    for (label, count) in corpus.label_distribution() {
        summary.insert(format!("label_{label}"), count.to_string());
    }
    for (topic, count) in corpus.topic_distribution() {
        summary.insert(format!("topic_{topic}"), count.to_string());
    }

    let seed = seed.unwrap_or(42);
    let mut manifest = RunManifest::new("ingest", seed, summary.clone())
        .with_data_file(file_digest(input)?)
        .with_output(&canonical);

    if make_two_class {
        let (two, warnings) = derive_two_class(&corpus)?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        let path = out.join("two_class.tsv");
        save_corpus(&two, &path)?;
        summary.insert("two_class_entries".to_string(), two.len().to_string());
        manifest = manifest.with_output(&path);
    }
    if split {
        let splits = stratified_split(&corpus, corpus::published_split_ratios(), seed)?;
        for (name, part) in [
            ("train.tsv", &splits.train),
            ("valid.tsv", &splits.valid),
            ("test.tsv", &splits.test),
        ] {
            let path = out.join(name);
            save_corpus(part, &path)?;
            manifest = manifest.with_output(&path);
        }
        summary.insert("split_train".to_string(), splits.train.len().to_string());
        summary.insert("split_valid".to_string(), splits.valid.len().to_string());
        summary.insert("split_test".to_string(), splits.test.len().to_string());
    }
    manifest.config = summary;
    manifest.write(out.join("manifest.json"))?;
    println!("ingested {} entries into {}", corpus.len(), out.display());
    Ok(())
}

fn parse_expected(expect: &str) -> Result<CorpusStats> {
    let mut stats = CorpusStats {
        longest_sentence: 0,
        average_length: 0,
        total_words: 0,
        non_bengali_words: 0,
    };
    for pair in expect.split(',') {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::Validation(format!("--expect item {pair:?} is not key=value"))
        })?;
        let value: usize = value.trim().parse().map_err(|_| {
            Error::Validation(format!("--expect value {value:?} is not an integer"))
        })?;
        match key.trim() {
            "longest" => stats.longest_sentence = value,
            "average" => stats.average_length = value,
            "total" => stats.total_words = value,
            "non_bengali" => stats.non_bengali_words = value,
            other => {
                return Err(Error::Validation(format!(
                    "--expect key {other:?} (known: longest, average, total, non_bengali)"
                )))
            }
        }
    }
    Ok(stats)
}

pub fn stats(
    input: &Path,
    arity: u8,
    format: OutputFormat,
    expect: Option<&str>,
    out: Option<&Path>,
    force: bool,
) -> Result<()> {
    let arity = TaskArity::from_u8(arity)?;
    let corpus = load_corpus(input, arity)?;
    let stats = corpus.compute_stats()?;
    let deviations = match expect {
        Some(expect) => stats.deviations_from(&parse_expected(expect)?),
        None => Vec::new(),
    };

    let rendered = match format {
        OutputFormat::Text => {
            let mut out = stats.render_text();
            out.push_str(&format!("tokenizer_note\t{}\n", corpus::TOKENIZER_NOTE));
            for deviation in &deviations {
                out.push_str(&format!("sensitivity_note\t{deviation}\n"));
            }
            out
        }
        OutputFormat::Csv => {
            let mut out = String::from("key,value\n");
            out.push_str(&format!("longest_sentence,{}\n", stats.longest_sentence));
            out.push_str(&format!("average_length,{}\n", stats.average_length));
            out.push_str(&format!("total_words,{}\n", stats.total_words));
            out.push_str(&format!("non_bengali_words,{}\n", stats.non_bengali_words));
            out.push_str(&format!(
                "tokenizer_note,\"{}\"\n",
                corpus::TOKENIZER_NOTE.replace('"', "'")
            ));
            for deviation in &deviations {
                out.push_str(&format!("sensitivity_note,\"{}\"\n", deviation.replace('"', "'")));
            }
            out
        }
        OutputFormat::Json => {
            let value = serde_json::json!({
                "stats": stats,
                "tokenizer_note": corpus::TOKENIZER_NOTE,
                "sensitivity_notes": deviations,
            });
            serde_json::to_string_pretty(&value)
                .map_err(|e| Error::Validation(format!("serialising stats: {e}")))?
        }
    };
    print!("{rendered}");
    if let Some(out_dir) = out {
        prepare_out_dir(out_dir, force)?;
        let path = out_dir.join(match format {
            OutputFormat::Text => "stats.txt",
            OutputFormat::Csv => "stats.csv",
            OutputFormat::Json => "stats.json",
        });
        write_text(&path, &rendered)?;
        let mut config = BTreeMap::new();
        config.insert("input".to_string(), input.display().to_string());
        config.insert("arity".to_string(), arity.to_string());
        RunManifest::new("stats", 0, config)
            .with_data_file(file_digest(input)?)
            .with_output(&path)
            .write(out_dir.join("manifest.json"))?;
    }
    Ok(())
}

pub fn merge_annotations(
    comments_path: &Path,
    annotations_path: &Path,
    noise_filter: bool,
    out: &Path,
    force: bool,
) -> Result<()> {
    let raw_comments = annotate::load_raw_comments(comments_path)?;
    let records = annotate::load_annotations(annotations_path)?;
    prepare_out_dir(out, force)?;

    let (kept, discarded) = if noise_filter {
        let outcome = annotate::filter_noise(raw_comments);
        (outcome.kept, outcome.discarded)
    } else {
        (raw_comments, Vec::new())
    };
    let merged = annotate::merge_annotations(&kept, &records)?;
    for warning in &merged.warnings {
        eprintln!("warning: {warning}");
    }

    let corpus_path = out.join("corpus.tsv");
    save_corpus(&merged.corpus, &corpus_path)?;
    let review_path = out.join("review.tsv");
    annotate::save_review_file(&merged.unresolved, &review_path)?;
    if !discarded.is_empty() {
        annotate::save_discarded_file(&discarded, out.join("discarded.tsv"))?;
    }
    write_text(&out.join("agreement.txt"), &merged.report.render_text())?;
    write_json(&out.join("agreement.json"), &merged.report)?;

    let mut config = BTreeMap::new();
    config.insert("noise_filter".to_string(), noise_filter.to_string());
    config.insert("kept".to_string(), kept.len().to_string());
    config.insert("discarded".to_string(), discarded.len().to_string());
    config.insert("unresolved".to_string(), merged.unresolved.len().to_string());
    RunManifest::new("merge-annotations", 0, config)
        .with_data_file(file_digest(comments_path)?)
        .with_data_file(file_digest(annotations_path)?)
        .with_output(&corpus_path)
        .with_output(&review_path)
        .write(out.join("manifest.json"))?;

    println!(
        "merged {} comments ({} unresolved, {} discarded) into {}",
        merged.corpus.len(),
        merged.unresolved.len(),
        discarded.len(),
        out.display()
    );
    Ok(())
}

pub fn train(args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let arity = cfg
        .arity
        .ok_or_else(|| Error::Config("missing required configuration key \"arity\"".into()))?;
    let head_kind = cfg
        .head
        .ok_or_else(|| Error::Config("missing required configuration key \"head\"".into()))?;
    let train_path = require_path(&cfg.train_path, "train_path")?;
    let valid_path = require_path(&cfg.valid_path, "valid_path")?;
    let test_path = require_path(&cfg.test_path, "test_path")?;
    let out = require_path(&cfg.out_dir, "out_dir")?;

    let splits = load_splits(&train_path, &valid_path, &test_path, arity)?;
    let backend = build_backend(&cfg, &splits.train)?;
    let backend_kind = backend.kind();
    let train_cfg = cfg.train_config(backend_kind);
    let head = HeadConfig::published(head_kind, arity);
    let mut model = ClassifierModel::build(
        backend,
        head,
        arity.num_classes(),
        cfg.feature_mode,
        cfg.seed,
    )?;

    prepare_out_dir(&out, args.force)?;
    write_text(&out.join("resolved.cfg"), &cfg.render_resolved())?;
    write_json(&out.join("parameters.json"), &model.parameter_manifest())?;

    let history = run_training(&mut model, &splits, &train_cfg)?;
    let digests = vec![
        file_digest(&train_path)?,
        file_digest(&valid_path)?,
        file_digest(&test_path)?,
    ];
    let checkpoint_path = out.join("checkpoint.json");
    save_checkpoint(&model, &checkpoint_path, Some(&train_cfg), digests.clone())?;
    write_json(&out.join("history.json"), &history)?;

    let mut manifest = RunManifest::new("train", cfg.seed, cfg.resolved_map())
        .with_output(&checkpoint_path)
        .with_output(out.join("history.json"));
    for digest in digests {
        manifest = manifest.with_data_file(digest);
    }
    manifest.write(out.join("manifest.json"))?;

    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "trained {backend_kind}+{head_kind} ({arity}-class) for {} epochs; best epoch {} (valid accuracy {})",
        history.epochs.len(),
        history.best_epoch,
        last.valid_accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".to_string())
    );
    println!("checkpoint written to {}", checkpoint_path.display());
    Ok(())
}

fn render_report(report: &EvaluationReport, format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Text => report.render_text(),
        OutputFormat::Csv => {
            let mut out = String::from("class,support,precision,recall,f1\n");
            for m in &report.per_class {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    m.label, m.support, m.precision, m.recall, m.f1
                ));
            }
            out.push_str(&format!("accuracy,,,,{}\n", report.accuracy));
            out
        }
        OutputFormat::Json => serde_json::to_string_pretty(report)
            .map_err(|e| Error::Validation(format!("serialising report: {e}")))?,
    })
}

pub fn evaluate(
    checkpoint: &Path,
    test: &Path,
    format: OutputFormat,
    out: Option<&Path>,
    force: bool,
) -> Result<()> {
    let loaded = load_checkpoint(checkpoint, force)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let corpus = load_corpus(test, loaded.model.arity())?;
    let report = eval_report(&loaded.model, &corpus)?;
    let rendered = render_report(&report, format)?;
    print!("{rendered}");
    if let Some(out_dir) = out {
        prepare_out_dir(out_dir, force)?;
        let path = out_dir.join(match format {
            OutputFormat::Text => "report.txt",
            OutputFormat::Csv => "report.csv",
            OutputFormat::Json => "report.json",
        });
        write_text(&path, &rendered)?;
        let mut config = BTreeMap::new();
        config.insert("checkpoint".to_string(), checkpoint.display().to_string());
        config.insert("test".to_string(), test.display().to_string());
        RunManifest::new("evaluate", loaded.seed, config)
            .with_data_file(file_digest(test)?)
            .with_output(&path)
            .write(out_dir.join("manifest.json"))?;
    }
    Ok(())
}

pub fn matrix(args: &ConfigArgs, format: OutputFormat) -> Result<()> {
    let cfg = resolve_config(args)?;
    let out = require_path(&cfg.out_dir, "out_dir")?;
    prepare_out_dir(&out, args.force)?;
    write_text(&out.join("resolved.cfg"), &cfg.render_resolved())?;

    let mut splits2 = None;
    let mut splits3 = None;
    for &arity in &cfg.matrix_arities {
        match arity {
            TaskArity::Two => {
                if let (Some(t), Some(v), Some(s)) = (
                    &cfg.train_path_2class,
                    &cfg.valid_path_2class,
                    &cfg.test_path_2class,
                ) {
                    splits2 = Some(load_splits(t, v, s, TaskArity::Two)?);
                }
            }
            TaskArity::Three => {
                if let (Some(t), Some(v), Some(s)) = (
                    &cfg.train_path_3class,
                    &cfg.valid_path_3class,
                    &cfg.test_path_3class,
                ) {
                    splits3 = Some(load_splits(t, v, s, TaskArity::Three)?);
                }
            }
        }
    }

    let base_train = cfg.train_config(BackendKind::WordStatic);
    let specs = build_specs(
        &cfg.matrix_backends,
        &cfg.matrix_heads,
        &cfg.matrix_arities,
        &base_train,
        cfg.learning_rate.is_some(),
        cfg.seed,
    );
    let resources = MatrixResources {
        sgns: cfg.sgns_config(false),
        ngram_range: (cfg.ngram_min, cfg.ngram_max),
        encoder: match (&cfg.encoder_checkpoint, cfg.encoder_init_random) {
            (Some(path), _) => Some(EncoderProvider::CheckpointPath(path.clone())),
            (None, true) => Some(EncoderProvider::RandomInit {
                config: cfg.encoder_config(),
            }),
            (None, false) => None,
        },
        feature_mode: cfg.feature_mode,
    };
    let result = run_matrix(
        &specs,
        splits2.as_ref(),
        splits3.as_ref(),
        &resources,
        Some(&out),
    )?;

    let text = result.render_text()?;
    let csv = result.render_csv()?;
    write_text(&out.join("matrix.txt"), &text)?;
    write_text(&out.join("matrix.csv"), &csv)?;
    write_json(&out.join("matrix.json"), &result)?;
    RunManifest::new("matrix", cfg.seed, cfg.resolved_map())
        .with_output(out.join("matrix.txt"))
        .with_output(out.join("matrix.csv"))
        .with_output(out.join("matrix.json"))
        .write(out.join("manifest.json"))?;

    match format {
        OutputFormat::Text => print!("{text}"),
        OutputFormat::Csv => print!("{csv}"),
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(&result)
                .map_err(|e| Error::Validation(format!("serialising matrix: {e}")))?
        ),
    }
    let failed = result.cells.len() - result.completed_count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed; see matrix.csv", result.cells.len());
    }
    println!("matrix artifacts written to {}", out.display());
    Ok(())
}

pub fn analyze(
    checkpoint: &Path,
    comments_path: &Path,
    categories: Option<&str>,
    format: OutputFormat,
    out: Option<&Path>,
    force: bool,
) -> Result<()> {
    let loaded = load_checkpoint(checkpoint, force)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let declared: Vec<String> = match categories {
        Some(list) => list
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect(),
        None => RunConfig::default().categories,
    };
    let comments = load_categorized(comments_path, &declared)?;
    let table = analyze_categories(&comments, &declared, &loaded.model)?;
    for category in &table.omitted_empty {
        eprintln!("warning: category {category:?} has no comments and was omitted");
    }
    let rendered = match format {
        OutputFormat::Text => table.render_text()?,
        OutputFormat::Csv => table.render_csv()?,
        OutputFormat::Json => serde_json::to_string_pretty(&table)
            .map_err(|e| Error::Validation(format!("serialising table: {e}")))?,
    };
    print!("{rendered}");
    if let Some(out_dir) = out {
        prepare_out_dir(out_dir, force)?;
        let path = out_dir.join(match format {
            OutputFormat::Text => "categories.txt",
            OutputFormat::Csv => "categories.csv",
            OutputFormat::Json => "categories.json",
        });
        write_text(&path, &rendered)?;
        let mut config = BTreeMap::new();
        config.insert("checkpoint".to_string(), checkpoint.display().to_string());
        config.insert("categories".to_string(), declared.join(","));
        RunManifest::new("analyze", loaded.seed, config)
            .with_data_file(file_digest(comments_path)?)
            .with_output(&path)
            .write(out_dir.join("manifest.json"))?;
    }
    Ok(())
}

pub fn predict(checkpoint: &Path, text: &str, format: OutputFormat, force: bool) -> Result<()> {
    let loaded = load_checkpoint(checkpoint, force)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let label = loaded.model.predict(text)?;
    let probabilities = loaded.model.probabilities(text)?;
    match format {
        OutputFormat::Text | OutputFormat::Csv => println!("{label}"),
        OutputFormat::Json => {
            let labels = loaded.model.arity().class_labels();
            let probs: BTreeMap<String, f64> = labels
                .iter()
                .zip(&probabilities)
                .map(|(l, p)| (l.to_string(), *p))
                .collect();
            let value = serde_json::json!({ "label": label, "probabilities": probs });
            println!(
                "{}",
                serde_json::to_string_pretty(&value)
                    .map_err(|e| Error::Validation(format!("serialising prediction: {e}")))?
            );
        }
    }
    Ok(())
}
