//! Labeled sentiment corpora: loading, validation, derivation, partitioning
//! and summary statistics.
//!
//! The on-disk format is UTF-8 TSV with LF line endings and the header
//! `id<TAB>topic<TAB>text<TAB>label`. Labels serialise as the lowercase
//! strings `negative`, `neutral`, `positive`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::text;
use crate::Result;

/// The ten topic names a corpus entry may carry.
pub const TOPICS: [&str; 10] = [
    "Sports",
    "Economy",
    "Entertainment",
    "International",
    "Education",
    "Technology",
    "Lifestyle",
    "Fashion",
    "Food",
    "Travel",
];

/// One of the three sentiment classes, with canonical codes 0/1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    /// Canonical integer code: negative 0, neutral 1, positive 2.
    pub fn code(self) -> usize {
        match self {
            SentimentLabel::Negative => 0,
            SentimentLabel::Neutral => 1,
            SentimentLabel::Positive => 2,
        }
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Lowercase serialised form.
    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }

    /// Strict parse of the serialised form; anything else is rejected.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "negative" => Some(SentimentLabel::Negative),
            "neutral" => Some(SentimentLabel::Neutral),
            "positive" => Some(SentimentLabel::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a task distinguishes two classes (negative/positive) or three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TaskArity {
    Two,
    Three,
}

impl TaskArity {
    pub fn num_classes(self) -> usize {
        match self {
            TaskArity::Two => 2,
            TaskArity::Three => 3,
        }
    }

    /// Labels a corpus of this arity may contain, in class-index order.
    pub fn class_labels(self) -> &'static [SentimentLabel] {
        match self {
            TaskArity::Two => &[SentimentLabel::Negative, SentimentLabel::Positive],
            TaskArity::Three => &SentimentLabel::ALL,
        }
    }

    pub fn admits(self, label: SentimentLabel) -> bool {
        self.class_labels().contains(&label)
    }

    /// Class index of a label under this arity (argmax order of the model).
    pub fn class_index(self, label: SentimentLabel) -> Option<usize> {
        self.class_labels().iter().position(|&l| l == label)
    }

    pub fn from_u8(value: u8) -> Result<Self> {
        TaskArity::try_from(value).map_err(Error::Config)
    }
}

impl From<TaskArity> for u8 {
    fn from(a: TaskArity) -> u8 {
        a.num_classes() as u8
    }
}

impl TryFrom<u8> for TaskArity {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, String> {
        match value {
            2 => Ok(TaskArity::Two),
            3 => Ok(TaskArity::Three),
            other => Err(format!("task arity must be 2 or 3, got {other}")),
        }
    }
}

impl fmt::Display for TaskArity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.num_classes())
    }
}

/// One annotated comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledComment {
    pub id: String,
    pub topic: String,
    pub text: String,
    pub label: SentimentLabel,
}

/// An ordered collection of labeled comments for a 2- or 3-class task.
///
/// Construction validates the corpus invariants: unique ids, admissible
/// labels, known topics, non-empty text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    entries: Vec<LabeledComment>,
    arity: TaskArity,
}

impl LabeledCorpus {
    pub fn new(entries: Vec<LabeledComment>, arity: TaskArity) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for entry in &entries {
            if entry.text.trim().is_empty() {
                return Err(Error::EmptyText {
                    id: entry.id.clone(),
                });
            }
            if !TOPICS.contains(&entry.topic.as_str()) {
                return Err(Error::Validation(format!(
                    "entry {:?} has unknown topic {:?}",
                    entry.id, entry.topic
                )));
            }
            if !arity.admits(entry.label) {
                return Err(Error::InadmissibleLabel {
                    id: entry.id.clone(),
                    label: entry.label.to_string(),
                    arity: arity.into(),
                });
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: entry.id.clone(),
                });
            }
        }
        Ok(LabeledCorpus { entries, arity })
    }

    pub fn arity(&self) -> TaskArity {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabeledComment] {
        &self.entries
    }

    /// Count of entries per label; every admissible label is present, with
    /// zero counts for absent labels.
    pub fn label_distribution(&self) -> BTreeMap<SentimentLabel, usize> {
        let mut counts: BTreeMap<SentimentLabel, usize> = self
            .arity
            .class_labels()
            .iter()
            .map(|&l| (l, 0))
            .collect();
        for entry in &self.entries {
            *counts.entry(entry.label).or_insert(0) += 1;
        }
        counts
    }

    /// Count of entries per observed topic.
    pub fn topic_distribution(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            *counts.entry(entry.topic.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Token-level summary statistics; errors on an empty corpus.
    pub fn compute_stats(&self) -> Result<CorpusStats> {
        if self.entries.is_empty() {
            return Err(Error::Validation(
                "cannot compute statistics of an empty corpus".into(),
            ));
        }
        let mut longest = 0usize;
        let mut total = 0usize;
        let mut non_bengali = 0usize;
        for entry in &self.entries {
            let tokens = text::whitespace_tokens(&entry.text);
            longest = longest.max(tokens.len());
            total += tokens.len();
            non_bengali += tokens.iter().filter(|t| !text::is_bengali_token(t)).count();
        }
        Ok(CorpusStats {
            longest_sentence: longest,
            average_length: total / self.entries.len(),
            total_words: total,
            non_bengali_words: non_bengali,
        })
    }
}

/// Disjoint train/valid/test partitions of one corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCorpus {
    pub train: LabeledCorpus,
    pub valid: LabeledCorpus,
    pub test: LabeledCorpus,
}

impl SplitCorpus {
    /// Validates pairwise-disjoint ids and matching arity.
    pub fn new(train: LabeledCorpus, valid: LabeledCorpus, test: LabeledCorpus) -> Result<Self> {
        if train.arity() != valid.arity() || train.arity() != test.arity() {
            return Err(Error::ArityMismatch {
                message: "train, valid and test splits must share one task arity".into(),
            });
        }
        let mut seen: HashSet<&str> = HashSet::new();
        let mut overlap = Vec::new();
        for corpus in [&train, &valid, &test] {
            for entry in corpus.entries() {
                if !seen.insert(entry.id.as_str()) {
                    overlap.push(entry.id.clone());
                }
            }
        }
        if !overlap.is_empty() {
            overlap.sort();
            overlap.dedup();
            return Err(Error::SplitOverlap { ids: overlap });
        }
        Ok(SplitCorpus { train, valid, test })
    }

    pub fn arity(&self) -> TaskArity {
        self.train.arity()
    }

    pub fn total_len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

/// Token statistics of a corpus.
///
/// Tokens are maximal whitespace-separated units after trimming; a token is
/// non-Bengali when none of its code points lies in U+0980..=U+09FF. The
/// average is the floor of the mean token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub longest_sentence: usize,
    pub average_length: usize,
    pub total_words: usize,
    pub non_bengali_words: usize,
}

/// Fixed description of the statistics tokenizer, attached to every report
/// so deviations from other tools' figures can be traced to the rule.
pub const TOKENIZER_NOTE: &str = "tokens are maximal whitespace-separated units after trimming, \
     punctuation kept attached; a token counts as non-Bengali when it contains \
     no code point in U+0980..=U+09FF; average length is the floor of the mean";

impl CorpusStats {
    /// Field-by-field comparison against reference values. Non-empty output
    /// means the documented tokenizer disagrees with the reference figures.
    pub fn deviations_from(&self, reference: &CorpusStats) -> Vec<String> {
        let mut notes = Vec::new();
        let mut check = |name: &str, got: usize, want: usize| {
            if got != want {
                notes.push(format!(
                    "{name}: computed {got} differs from reference {want} under the documented tokenizer"
                ));
            }
        };
        check(
            "longest_sentence",
            self.longest_sentence,
            reference.longest_sentence,
        );
        check(
            "average_length",
            self.average_length,
            reference.average_length,
        );
        check("total_words", self.total_words, reference.total_words);
        check(
            "non_bengali_words",
            self.non_bengali_words,
            reference.non_bengali_words,
        );
        notes
    }

    /// Flat key-value rendering used by the CLI text output.
    pub fn render_text(&self) -> String {
        format!(
            "longest_sentence\t{}\naverage_length\t{}\ntotal_words\t{}\nnon_bengali_words\t{}\n",
            self.longest_sentence, self.average_length, self.total_words, self.non_bengali_words
        )
    }
}

const CORPUS_HEADER: &str = "id\ttopic\ttext\tlabel";

/// Loads a corpus from a TSV file, validating every row.
pub fn load_corpus(path: impl AsRef<Path>, arity: TaskArity) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let rows = tsv::read_rows(path, CORPUS_HEADER)?;
    if rows.is_empty() {
        return Err(Error::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    let mut entries = Vec::with_capacity(rows.len());
    let mut seen: HashSet<String> = HashSet::with_capacity(rows.len());
    for (line, fields) in rows {
        let [id, topic, body, label_str] = match <[String; 4]>::try_from(fields) {
            Ok(f) => f,
            Err(f) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected 4 tab-separated fields, found {}", f.len()),
                ))
            }
        };
        let label = SentimentLabel::parse(&label_str).ok_or_else(|| Error::UnknownLabel {
            path: path.to_path_buf(),
            line,
            label: label_str.clone(),
        })?;
        if !TOPICS.contains(&topic.as_str()) {
            return Err(Error::UnknownTopic {
                path: path.to_path_buf(),
                line,
                topic,
            });
        }
        if body.trim().is_empty() {
            return Err(Error::EmptyText { id });
        }
        if !arity.admits(label) {
            return Err(Error::InadmissibleLabel {
                id,
                label: label.to_string(),
                arity: arity.into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        entries.push(LabeledComment {
            id,
            topic,
            text: body,
            label,
        });
    }
    LabeledCorpus::new(entries, arity)
}

/// Writes a corpus as TSV (UTF-8, LF endings, header row).
pub fn save_corpus(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(corpus.len() * 64);
    out.push_str(CORPUS_HEADER);
    out.push('\n');
    for entry in corpus.entries() {
        for (field, name) in [(&entry.id, "id"), (&entry.topic, "topic"), (&entry.text, "text")] {
            tsv::check_field(field, name, &entry.id)?;
        }
        out.push_str(&entry.id);
        out.push('\t');
        out.push_str(&entry.topic);
        out.push('\t');
        out.push_str(&entry.text);
        out.push('\t');
        out.push_str(entry.label.as_str());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Drops every neutral entry of a 3-class corpus, preserving order.
///
/// Returns the 2-class corpus plus warnings (currently only: everything was
/// neutral and the result is empty).
pub fn derive_two_class(corpus: &LabeledCorpus) -> Result<(LabeledCorpus, Vec<String>)> {
    if corpus.arity() != TaskArity::Three {
        return Err(Error::ArityMismatch {
            message: "derive_two_class expects a 3-class corpus".into(),
        });
    }
    let entries: Vec<LabeledComment> = corpus
        .entries()
        .iter()
        .filter(|e| e.label != SentimentLabel::Neutral)
        .cloned()
        .collect();
    let mut warnings = Vec::new();
    if entries.is_empty() {
        warnings.push("all entries were neutral; derived 2-class corpus is empty".to_string());
    }
    let derived = LabeledCorpus::new(entries, TaskArity::Two)?;
    Ok((derived, warnings))
}

/// Loads three split files and verifies id disjointness.
pub fn load_splits(
    train: impl AsRef<Path>,
    valid: impl AsRef<Path>,
    test: impl AsRef<Path>,
    arity: TaskArity,
) -> Result<SplitCorpus> {
    SplitCorpus::new(
        load_corpus(train, arity)?,
        load_corpus(valid, arity)?,
        load_corpus(test, arity)?,
    )
}

/// Seeded label-stratified splitter for synthetic corpora.
///
/// `ratios` are the train/valid/test proportions; the published partition
/// corresponds to `(12626, 2226, 3000) / 17852`.
pub fn stratified_split(
    corpus: &LabeledCorpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitCorpus> {
    let (r_train, r_valid, r_test) = ratios;
    let sum = r_train + r_valid + r_test;
    if !(r_train > 0.0 && r_valid >= 0.0 && r_test >= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split ratios must be non-negative and sum to 1, got ({r_train}, {r_valid}, {r_test})"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Validation("cannot split an empty corpus".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut parts: [Vec<LabeledComment>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &label in corpus.arity().class_labels() {
        let mut pool: Vec<&LabeledComment> = corpus
            .entries()
            .iter()
            .filter(|e| e.label == label)
            .collect();
        pool.shuffle(&mut rng);
        let n = pool.len();
        let n_train = (n as f64 * r_train).round() as usize;
        let n_valid = (n as f64 * r_valid).round() as usize;
        let n_train = n_train.min(n);
        let n_valid = n_valid.min(n - n_train);
        for (idx, entry) in pool.into_iter().enumerate() {
            let slot = if idx < n_train {
                0
            } else if idx < n_train + n_valid {
                1
            } else {
                2
            };
            parts[slot].push(entry.clone());
        }
    }
    let [train, valid, test] = parts;
    let arity = corpus.arity();
    SplitCorpus::new(
        LabeledCorpus::new(train, arity)?,
        LabeledCorpus::new(valid, arity)?,
        LabeledCorpus::new(test, arity)?,
    )
}

/// Default split proportions matching the published partition sizes.
pub fn published_split_ratios() -> (f64, f64, f64) {
    let total = 17_852.0;
    (12_626.0 / total, 2_226.0 / total, 3_000.0 / total)
}

pub(crate) mod tsv {
    //! Minimal strict TSV reader/writer helpers shared by the data modules.

    use std::path::{Path, PathBuf};

    use crate::error::Error;
    use crate::Result;

    /// Reads a TSV file, checks the exact header, and returns `(line_no, fields)`
    /// per data row. CR before LF is stripped; a trailing final newline is fine.
    pub fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw = raw.strip_prefix('\u{FEFF}').unwrap_or(&raw);
        let mut rows = Vec::new();
        let mut lines = raw.split('\n').enumerate().peekable();
        let (_, first) = lines.next().ok_or_else(|| {
            Error::parse(path, 1, format!("missing header line (expected {header:?})"))
        })?;
        let first = first.strip_suffix('\r').unwrap_or(first);
        if first != header {
            return Err(Error::parse(
                path,
                1,
                format!("bad header {first:?} (expected {header:?})"),
            ));
        }
        while let Some((idx, line)) = lines.next() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            // The final empty segment after a trailing newline is not a row.
            if line.is_empty() && lines.peek().is_none() {
                break;
            }
            let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
            rows.push((idx + 1, fields));
        }
        Ok(rows)
    }

    /// Rejects field values that cannot survive the TSV surface.
    pub fn check_field(value: &str, name: &str, id: &str) -> Result<()> {
        if value.contains('\t') || value.contains('\n') || value.contains('\r') {
            return Err(Error::Validation(format!(
                "{name} of entry {id:?} contains a tab or line break and cannot be written as TSV"
            )));
        }
        Ok(())
    }

    /// Writes rows with a header, LF endings.
    pub fn write_rows(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
        let mut out = String::new();
        out.push_str(header);
        out.push('\n');
        for row in rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn path_buf(path: &Path) -> PathBuf {
        path.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str, topic: &str, text: &str, label: SentimentLabel) -> LabeledComment {
        LabeledComment {
            id: id.into(),
            topic: topic.into(),
            text: text.into(),
            label,
        }
    }

    fn small_corpus() -> LabeledCorpus {
        LabeledCorpus::new(
            vec![
                entry("a", "Sports", "ভালো খেলা", SentimentLabel::Positive),
                entry("b", "Sports", "খারাপ দল আজ", SentimentLabel::Negative),
                entry("c", "Travel", "নদী শহর", SentimentLabel::Neutral),
            ],
            TaskArity::Three,
        )
        .unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_valid_corpus() {
        let f = write_temp(
            "id\ttopic\ttext\tlabel\n1\tSports\tভালো খেলা\tpositive\n2\tFood\tখারাপ\tnegative\n",
        );
        let c = load_corpus(f.path(), TaskArity::Three).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.entries()[0].label, SentimentLabel::Positive);
    }

    #[test]
    fn header_only_file_is_empty_corpus_error() {
        let f = write_temp("id\ttopic\ttext\tlabel\n");
        match load_corpus(f.path(), TaskArity::Three) {
            Err(Error::EmptyCorpus { .. }) => {}
            other => panic!("expected EmptyCorpus, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_error_names_the_id() {
        let f = write_temp(
            "id\ttopic\ttext\tlabel\nx1\tSports\tভালো\tpositive\nx1\tSports\tখারাপ\tnegative\n",
        );
        match load_corpus(f.path(), TaskArity::Three) {
            Err(Error::DuplicateId { id }) => assert_eq!(id, "x1"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn neutral_row_rejected_in_two_class_load() {
        let f = write_temp("id\ttopic\ttext\tlabel\n1\tSports\tকিছু\tneutral\n");
        match load_corpus(f.path(), TaskArity::Two) {
            Err(Error::InadmissibleLabel { arity, .. }) => assert_eq!(arity, 2),
            other => panic!("expected InadmissibleLabel, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_and_wrong_column_count_are_distinct_errors() {
        let f = write_temp("id\ttopic\ttext\tlabel\n1\tSports\tকিছু\tmeh\n");
        assert!(matches!(
            load_corpus(f.path(), TaskArity::Three),
            Err(Error::UnknownLabel { .. })
        ));
        let f = write_temp("id\ttopic\ttext\tlabel\n1\tSports\tকিছু\n");
        assert!(matches!(
            load_corpus(f.path(), TaskArity::Three),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_topic_rejected_at_load() {
        let f = write_temp("id\ttopic\ttext\tlabel\n1\tWeather\tকিছু\tneutral\n");
        assert!(matches!(
            load_corpus(f.path(), TaskArity::Three),
            Err(Error::UnknownTopic { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_corpus("/nonexistent/corpus.tsv", TaskArity::Three),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn crlf_input_is_accepted_and_saved_as_lf() {
        let f = write_temp("id\ttopic\ttext\tlabel\r\n1\tSports\tভালো\tpositive\r\n");
        let c = load_corpus(f.path(), TaskArity::Three).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&c, out.path()).unwrap();
        let written = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(written, "id\ttopic\ttext\tlabel\n1\tSports\tভালো\tpositive\n");
    }

    #[test]
    fn derive_two_class_drops_neutral_preserving_order() {
        let (two, warnings) = derive_two_class(&small_corpus()).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two.arity(), TaskArity::Two);
        assert_eq!(two.entries()[0].id, "a");
        assert_eq!(two.entries()[1].id, "b");
        assert!(warnings.is_empty());
    }

    #[test]
    fn derive_two_class_on_all_neutral_warns() {
        let c = LabeledCorpus::new(
            vec![entry("n1", "Food", "কিছু", SentimentLabel::Neutral)],
            TaskArity::Three,
        )
        .unwrap();
        let (two, warnings) = derive_two_class(&c).unwrap();
        assert!(two.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn derive_two_class_rejects_two_class_input() {
        let (two, _) = derive_two_class(&small_corpus()).unwrap();
        assert!(matches!(
            derive_two_class(&two),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn label_distribution_counts_sum_to_len() {
        let c = small_corpus();
        let dist = c.label_distribution();
        assert_eq!(dist.values().sum::<usize>(), c.len());
        assert_eq!(dist[&SentimentLabel::Negative], 1);
        assert_eq!(dist[&SentimentLabel::Neutral], 1);
        assert_eq!(dist[&SentimentLabel::Positive], 1);
    }

    #[test]
    fn label_distribution_of_empty_corpus_is_all_zero() {
        let c = LabeledCorpus::new(Vec::new(), TaskArity::Three).unwrap();
        let dist = c.label_distribution();
        assert_eq!(dist.len(), 3);
        assert!(dist.values().all(|&v| v == 0));
    }

    #[test]
    fn topic_distribution_single_topic() {
        let c = LabeledCorpus::new(
            vec![
                entry("1", "Food", "এক", SentimentLabel::Positive),
                entry("2", "Food", "দুই", SentimentLabel::Negative),
            ],
            TaskArity::Three,
        )
        .unwrap();
        let dist = c.topic_distribution();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist["Food"], 2);
    }

    #[test]
    fn stats_single_two_token_sentence() {
        let c = LabeledCorpus::new(
            vec![entry("1", "Food", "ভালো খাবার", SentimentLabel::Positive)],
            TaskArity::Three,
        )
        .unwrap();
        let stats = c.compute_stats().unwrap();
        assert_eq!(stats.longest_sentence, 2);
        assert_eq!(stats.average_length, 2);
        assert_eq!(stats.total_words, 2);
        assert_eq!(stats.non_bengali_words, 0);
    }

    #[test]
    fn stats_three_and_five_token_sentences() {
        let c = LabeledCorpus::new(
            vec![
                entry("1", "Food", "এক দুই তিন", SentimentLabel::Positive),
                entry("2", "Food", "এক দুই তিন চার পাঁচ", SentimentLabel::Negative),
            ],
            TaskArity::Three,
        )
        .unwrap();
        let stats = c.compute_stats().unwrap();
        assert_eq!(stats.average_length, 4);
        assert_eq!(stats.total_words, 8);
        assert_eq!(stats.longest_sentence, 5);
    }

    #[test]
    fn stats_counts_non_bengali_tokens() {
        let c = LabeledCorpus::new(
            vec![entry("1", "Food", "ভালো word 2020", SentimentLabel::Positive)],
            TaskArity::Three,
        )
        .unwrap();
        assert_eq!(c.compute_stats().unwrap().non_bengali_words, 2);
    }

    #[test]
    fn stats_error_on_empty_corpus() {
        let c = LabeledCorpus::new(Vec::new(), TaskArity::Three).unwrap();
        assert!(c.compute_stats().is_err());
    }

    #[test]
    fn split_overlap_detected() {
        let a = LabeledCorpus::new(
            vec![entry("x", "Food", "এক", SentimentLabel::Positive)],
            TaskArity::Three,
        )
        .unwrap();
        let b = LabeledCorpus::new(
            vec![entry("y", "Food", "দুই", SentimentLabel::Negative)],
            TaskArity::Three,
        )
        .unwrap();
        let c = LabeledCorpus::new(
            vec![entry("x", "Food", "তিন", SentimentLabel::Neutral)],
            TaskArity::Three,
        )
        .unwrap();
        match SplitCorpus::new(a, b, c) {
            Err(Error::SplitOverlap { ids }) => assert_eq!(ids, vec!["x".to_string()]),
            other => panic!("expected SplitOverlap, got {other:?}"),
        }
    }

    #[test]
    fn single_entry_splits_load() {
        let t = write_temp("id\ttopic\ttext\tlabel\n1\tSports\tএক\tpositive\n");
        let v = write_temp("id\ttopic\ttext\tlabel\n2\tSports\tদুই\tnegative\n");
        let s = write_temp("id\ttopic\ttext\tlabel\n3\tSports\tতিন\tneutral\n");
        let splits = load_splits(t.path(), v.path(), s.path(), TaskArity::Three).unwrap();
        assert_eq!(splits.train.len(), 1);
        assert_eq!(splits.valid.len(), 1);
        assert_eq!(splits.test.len(), 1);
        assert_eq!(splits.total_len(), 3);
    }

    #[test]
    fn stratified_split_is_deterministic_and_partitioning() {
        let mut entries = Vec::new();
        for i in 0..60 {
            let label = match i % 3 {
                0 => SentimentLabel::Negative,
                1 => SentimentLabel::Neutral,
                _ => SentimentLabel::Positive,
            };
            entries.push(entry(&format!("e{i}"), "Sports", "এক দুই", label));
        }
        let c = LabeledCorpus::new(entries, TaskArity::Three).unwrap();
        let s1 = stratified_split(&c, (0.7, 0.15, 0.15), 9).unwrap();
        let s2 = stratified_split(&c, (0.7, 0.15, 0.15), 9).unwrap();
        assert_eq!(s1.total_len(), c.len());
        assert_eq!(
            s1.train.entries().iter().map(|e| &e.id).collect::<Vec<_>>(),
            s2.train.entries().iter().map(|e| &e.id).collect::<Vec<_>>()
        );
        // Stratification: each split has roughly the corpus label balance.
        let dist = s1.train.label_distribution();
        assert_eq!(dist[&SentimentLabel::Negative], 14);
        assert_eq!(dist[&SentimentLabel::Neutral], 14);
        assert_eq!(dist[&SentimentLabel::Positive], 14);
    }

    #[test]
    fn two_class_size_plus_neutral_equals_total() {
        let c = small_corpus();
        let (two, _) = derive_two_class(&c).unwrap();
        let neutral = c.label_distribution()[&SentimentLabel::Neutral];
        assert_eq!(two.len() + neutral, c.len());
    }

    proptest! {
        #[test]
        fn corpus_tsv_round_trip(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..20);
            let words = ["ভালো", "খারাপ", "দল", "আজ", "নদী", "ok", "2020"];
            let mut entries = Vec::new();
            for i in 0..n {
                let len = rng.gen_range(1..6);
                let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
                let label = SentimentLabel::ALL[rng.gen_range(0..3)];
                let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
                entries.push(entry(&format!("id{i}"), topic, &text.join(" "), label));
            }
            let corpus = LabeledCorpus::new(entries, TaskArity::Three).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            save_corpus(&corpus, f.path()).unwrap();
            let loaded = load_corpus(f.path(), TaskArity::Three).unwrap();
            prop_assert_eq!(&corpus, &loaded);
            // Byte-identical on the second pass.
            let f2 = tempfile::NamedTempFile::new().unwrap();
            save_corpus(&loaded, f2.path()).unwrap();
            prop_assert_eq!(
                std::fs::read(f.path()).unwrap(),
                std::fs::read(f2.path()).unwrap()
            );
        }

        #[test]
        fn derive_two_class_idempotent_in_effect(neutral_every in 1usize..5) {
            let mut entries = Vec::new();
            for i in 0..12 {
                let label = if i % neutral_every == 0 {
                    SentimentLabel::Neutral
                } else if i % 2 == 0 {
                    SentimentLabel::Negative
                } else {
                    SentimentLabel::Positive
                };
                entries.push(entry(&format!("p{i}"), "Sports", "এক", label));
            }
            let c = LabeledCorpus::new(entries, TaskArity::Three).unwrap();
            let (two, _) = derive_two_class(&c).unwrap();
            let still_neutral = two
                .entries()
                .iter()
                .filter(|e| e.label == SentimentLabel::Neutral)
                .count();
            prop_assert_eq!(still_neutral, 0);
            prop_assert_eq!(
                two.len() + c.label_distribution()[&SentimentLabel::Neutral],
                c.len()
            );
        }

        #[test]
        fn stats_total_matches_per_entry_sum(n in 1usize..15, seed in 0u64..500) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let words = ["এক", "দুই", "তিন", "চার"];
            let mut entries = Vec::new();
            let mut expected_total = 0usize;
            for i in 0..n {
                let len = rng.gen_range(1..9);
                expected_total += len;
                let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..4)]).collect();
                entries.push(entry(&format!("q{i}"), "Food", &text.join(" "), SentimentLabel::Positive));
            }
            let c = LabeledCorpus::new(entries, TaskArity::Three).unwrap();
            let stats = c.compute_stats().unwrap();
            prop_assert_eq!(stats.total_words, expected_total);
            prop_assert!(stats.longest_sentence >= stats.average_length);
            prop_assert!(stats.average_length >= 1);
        }
    }
}
