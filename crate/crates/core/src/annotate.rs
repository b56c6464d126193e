//! Merging three independent annotator labels into a final label, plus the
//! noise filter applied to raw comments before annotation.
//!
//! The merge rule is strict majority: a label carried by at least two of the
//! three annotators wins; full disagreement leaves the record unresolved for
//! expert review instead of silently dropping it.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tsv, LabeledComment, LabeledCorpus, SentimentLabel, TaskArity};
use crate::error::Error;
use crate::text;
use crate::Result;

/// Three independent labels for one comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub comment_id: String,
    pub labels: [SentimentLabel; 3],
}

impl AnnotationRecord {
    pub fn new(comment_id: impl Into<String>, labels: [SentimentLabel; 3]) -> Result<Self> {
        let comment_id = comment_id.into();
        if comment_id.is_empty() {
            return Err(Error::Validation("annotation record with empty comment id".into()));
        }
        Ok(AnnotationRecord { comment_id, labels })
    }
}

/// How strongly the annotators agreed on a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    Unanimous,
    Majority,
    None,
}

/// The outcome of merging one record. Unresolved means all three labels
/// differed and no final label exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergedLabel {
    Unanimous(SentimentLabel),
    Majority(SentimentLabel),
    Unresolved,
}

impl MergedLabel {
    pub fn label(self) -> Option<SentimentLabel> {
        match self {
            MergedLabel::Unanimous(l) | MergedLabel::Majority(l) => Some(l),
            MergedLabel::Unresolved => None,
        }
    }

    pub fn agreement(self) -> Agreement {
        match self {
            MergedLabel::Unanimous(_) => Agreement::Unanimous,
            MergedLabel::Majority(_) => Agreement::Majority,
            MergedLabel::Unresolved => Agreement::None,
        }
    }
}

/// Strict majority vote over the three labels.
///
/// The result depends only on the multiset of labels, so it is invariant
/// under annotator permutation.
pub fn merge_majority(record: &AnnotationRecord) -> MergedLabel {
    let [a, b, c] = record.labels;
    if a == b && b == c {
        return MergedLabel::Unanimous(a);
    }
    if a == b || a == c {
        return MergedLabel::Majority(a);
    }
    if b == c {
        return MergedLabel::Majority(b);
    }
    MergedLabel::Unresolved
}

/// Counts and proportions of agreement outcomes over a record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub total: usize,
    pub unanimous: usize,
    pub majority: usize,
    pub none: usize,
}

impl AgreementReport {
    pub fn proportions(&self) -> (f64, f64, f64) {
        let t = self.total as f64;
        (
            self.unanimous as f64 / t,
            self.majority as f64 / t,
            self.none as f64 / t,
        )
    }

    pub fn render_text(&self) -> String {
        let (u, m, n) = self.proportions();
        format!(
            "records\t{}\nunanimous\t{}\t{:.4}\nmajority\t{}\t{:.4}\nnone\t{}\t{:.4}\n",
            self.total, self.unanimous, u, self.majority, m, self.none, n
        )
    }
}

/// Tallies merge outcomes over a non-empty record set.
pub fn agreement_report(records: &[AnnotationRecord]) -> Result<AgreementReport> {
    if records.is_empty() {
        return Err(Error::Validation(
            "agreement report needs at least one record".into(),
        ));
    }
    let mut report = AgreementReport {
        total: records.len(),
        unanimous: 0,
        majority: 0,
        none: 0,
    };
    for record in records {
        match merge_majority(record).agreement() {
            Agreement::Unanimous => report.unanimous += 1,
            Agreement::Majority => report.majority += 1,
            Agreement::None => report.none += 1,
        }
    }
    Ok(report)
}

/// A comment before annotation: id, topic, text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub topic: String,
    pub text: String,
}

/// Why a raw comment was discarded by the noise filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    Empty,
    TooShort,
    DuplicateText,
    NonBengaliDominant,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::Empty => "empty",
            DiscardReason::TooShort => "too_short",
            DiscardReason::DuplicateText => "duplicate_text",
            DiscardReason::NonBengaliDominant => "non_bengali_dominant",
        }
    }
}

/// Partition of the input into kept comments and discarded ones with reasons.
#[derive(Debug, Clone)]
pub struct NoiseFilterOutcome {
    pub kept: Vec<RawComment>,
    pub discarded: Vec<(RawComment, DiscardReason)>,
}

/// Filters noisy comments in input order.
///
/// Criteria, checked in order so each discard carries exactly one reason:
/// empty after trim; fewer than 2 tokens; exact duplicate of an earlier kept
/// text; more than 50% non-Bengali tokens. Kept texts are never mutated.
pub fn filter_noise(raw: Vec<RawComment>) -> NoiseFilterOutcome {
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    let mut seen_texts: HashSet<String> = HashSet::new();
    for comment in raw {
        let tokens = text::whitespace_tokens(&comment.text);
        let reason = if comment.text.trim().is_empty() {
            Some(DiscardReason::Empty)
        } else if tokens.len() < 2 {
            Some(DiscardReason::TooShort)
        } else if seen_texts.contains(&comment.text) {
            Some(DiscardReason::DuplicateText)
        } else {
            let non_bengali = tokens.iter().filter(|t| !text::is_bengali_token(t)).count();
            if non_bengali * 2 > tokens.len() {
                Some(DiscardReason::NonBengaliDominant)
            } else {
                None
            }
        };
        match reason {
            Some(r) => discarded.push((comment, r)),
            None => {
                seen_texts.insert(comment.text.clone());
                kept.push(comment);
            }
        }
    }
    NoiseFilterOutcome { kept, discarded }
}

/// Result of merging annotations over a set of raw comments.
#[derive(Debug)]
pub struct MergeResult {
    /// Fully labeled 3-class corpus of the resolved records.
    pub corpus: LabeledCorpus,
    /// Records where all three annotators disagreed, for expert review.
    pub unresolved: Vec<AnnotationRecord>,
    pub report: AgreementReport,
    pub warnings: Vec<String>,
}

/// Joins kept comments with their annotation records and merges labels.
///
/// Every comment must have exactly one annotation record; annotation rows
/// without a matching comment produce warnings. Unresolved records are
/// excluded from the corpus and returned for the review file.
pub fn merge_annotations(
    comments: &[RawComment],
    records: &[AnnotationRecord],
) -> Result<MergeResult> {
    let mut by_id: std::collections::HashMap<&str, &AnnotationRecord> = Default::default();
    for record in records {
        if by_id.insert(record.comment_id.as_str(), record).is_some() {
            return Err(Error::DuplicateId {
                id: record.comment_id.clone(),
            });
        }
    }
    let mut warnings = Vec::new();
    let comment_ids: HashSet<&str> = comments.iter().map(|c| c.id.as_str()).collect();
    for record in records {
        if !comment_ids.contains(record.comment_id.as_str()) {
            warnings.push(format!(
                "annotation for unknown comment id {:?} ignored",
                record.comment_id
            ));
        }
    }

    let mut entries = Vec::new();
    let mut unresolved = Vec::new();
    let mut used_records = Vec::new();
    for comment in comments {
        let record = by_id.get(comment.id.as_str()).ok_or_else(|| {
            Error::Validation(format!("comment {:?} has no annotation record", comment.id))
        })?;
        used_records.push((*record).clone());
        match merge_majority(record).label() {
            Some(label) => entries.push(LabeledComment {
                id: comment.id.clone(),
                topic: comment.topic.clone(),
                text: comment.text.clone(),
                label,
            }),
            None => unresolved.push((*record).clone()),
        }
    }
    let report = agreement_report(&used_records)?;
    let corpus = LabeledCorpus::new(entries, TaskArity::Three)?;
    Ok(MergeResult {
        corpus,
        unresolved,
        report,
        warnings,
    })
}

const ANNOTATION_HEADER: &str = "comment_id\tlabel_a\tlabel_b\tlabel_c";
const RAW_HEADER: &str = "id\ttopic\ttext";

/// Loads annotation records from TSV.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let rows = tsv::read_rows(path, ANNOTATION_HEADER)?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let [id, a, b, c] = match <[String; 4]>::try_from(fields) {
            Ok(f) => f,
            Err(f) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected 4 tab-separated fields, found {}", f.len()),
                ))
            }
        };
        let mut labels = [SentimentLabel::Neutral; 3];
        for (slot, raw) in labels.iter_mut().zip([a, b, c]) {
            *slot = SentimentLabel::parse(&raw).ok_or_else(|| Error::UnknownLabel {
                path: tsv::path_buf(path),
                line,
                label: raw,
            })?;
        }
        records.push(AnnotationRecord::new(id, labels)?);
    }
    Ok(records)
}

/// Loads raw (unannotated) comments from TSV.
pub fn load_raw_comments(path: impl AsRef<Path>) -> Result<Vec<RawComment>> {
    let path = path.as_ref();
    let rows = tsv::read_rows(path, RAW_HEADER)?;
    let mut comments = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let [id, topic, body] = match <[String; 3]>::try_from(fields) {
            Ok(f) => f,
            Err(f) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected 3 tab-separated fields, found {}", f.len()),
                ))
            }
        };
        comments.push(RawComment {
            id,
            topic,
            text: body,
        });
    }
    Ok(comments)
}

/// Writes discarded comments with their reason codes.
pub fn save_discarded_file(
    discarded: &[(RawComment, DiscardReason)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let rows: Vec<Vec<String>> = discarded
        .iter()
        .map(|(c, reason)| {
            vec![
                c.id.clone(),
                c.topic.clone(),
                c.text.clone(),
                reason.as_str().to_string(),
            ]
        })
        .collect();
    tsv::write_rows(path.as_ref(), "id\ttopic\ttext\treason", &rows)
}

/// Writes unresolved records as the review TSV.
pub fn save_review_file(records: &[AnnotationRecord], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.comment_id.clone()];
            row.extend(r.labels.iter().map(|l| l.as_str().to_string()));
            row
        })
        .collect();
    tsv::write_rows(path.as_ref(), ANNOTATION_HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::{Negative as N, Neutral as U, Positive as P};

    fn record(labels: [SentimentLabel; 3]) -> AnnotationRecord {
        AnnotationRecord::new("c1", labels).unwrap()
    }

    /// Independent oracle: count votes and apply the >= 2 rule directly.
    fn vote_counter(labels: [SentimentLabel; 3]) -> MergedLabel {
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.code()] += 1;
        }
        if let Some(code) = counts.iter().position(|&c| c == 3) {
            return MergedLabel::Unanimous(SentimentLabel::from_code(code).unwrap());
        }
        if let Some(code) = counts.iter().position(|&c| c == 2) {
            return MergedLabel::Majority(SentimentLabel::from_code(code).unwrap());
        }
        MergedLabel::Unresolved
    }

    #[test]
    fn unanimous_positive() {
        assert_eq!(merge_majority(&record([P, P, P])), MergedLabel::Unanimous(P));
    }

    #[test]
    fn majority_negative() {
        assert_eq!(merge_majority(&record([N, U, N])), MergedLabel::Majority(N));
    }

    #[test]
    fn all_distinct_is_unresolved() {
        assert_eq!(merge_majority(&record([N, U, P])), MergedLabel::Unresolved);
    }

    #[test]
    fn matches_vote_counter_on_all_27_triples() {
        for a in SentimentLabel::ALL {
            for b in SentimentLabel::ALL {
                for c in SentimentLabel::ALL {
                    let labels = [a, b, c];
                    assert_eq!(
                        merge_majority(&record(labels)),
                        vote_counter(labels),
                        "triple {labels:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn permutation_invariance_over_all_triples() {
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for a in SentimentLabel::ALL {
            for b in SentimentLabel::ALL {
                for c in SentimentLabel::ALL {
                    let labels = [a, b, c];
                    let base = merge_majority(&record(labels));
                    for perm in perms {
                        let permuted = [labels[perm[0]], labels[perm[1]], labels[perm[2]]];
                        assert_eq!(merge_majority(&record(permuted)), base);
                    }
                }
            }
        }
    }

    #[test]
    fn agreement_report_all_unanimous() {
        let records: Vec<_> = (0..10)
            .map(|i| AnnotationRecord::new(format!("r{i}"), [P, P, P]).unwrap())
            .collect();
        let report = agreement_report(&records).unwrap();
        assert_eq!(report.proportions(), (1.0, 0.0, 0.0));
    }

    #[test]
    fn agreement_report_thirds() {
        let records = vec![
            AnnotationRecord::new("a", [P, P, P]).unwrap(),
            AnnotationRecord::new("b", [N, N, P]).unwrap(),
            AnnotationRecord::new("c", [N, U, P]).unwrap(),
        ];
        let report = agreement_report(&records).unwrap();
        let (u, m, n) = report.proportions();
        assert!((u - 1.0 / 3.0).abs() < 1e-12);
        assert!((m - 1.0 / 3.0).abs() < 1e-12);
        assert!((n - 1.0 / 3.0).abs() < 1e-12);
        assert!((u + m + n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn agreement_report_rejects_empty_set() {
        assert!(agreement_report(&[]).is_err());
    }

    fn raw(id: &str, text: &str) -> RawComment {
        RawComment {
            id: id.into(),
            topic: "Sports".into(),
            text: text.into(),
        }
    }

    #[test]
    fn filter_discards_empty() {
        let out = filter_noise(vec![raw("1", "   ")]);
        assert!(out.kept.is_empty());
        assert_eq!(out.discarded[0].1, DiscardReason::Empty);
    }

    #[test]
    fn filter_discards_single_token() {
        let out = filter_noise(vec![raw("1", "ভালো")]);
        assert_eq!(out.discarded[0].1, DiscardReason::TooShort);
    }

    #[test]
    fn filter_discards_duplicate_keeping_first() {
        let out = filter_noise(vec![
            raw("1", "ভালো খেলা আজ"),
            raw("2", "ভালো খেলা আজ"),
        ]);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].id, "1");
        assert_eq!(out.discarded[0].1, DiscardReason::DuplicateText);
    }

    #[test]
    fn filter_discards_non_bengali_dominant() {
        let out = filter_noise(vec![raw("1", "good game indeed ভালো")]);
        assert_eq!(out.discarded[0].1, DiscardReason::NonBengaliDominant);
        // Exactly half non-Bengali is kept.
        let out = filter_noise(vec![raw("2", "good ভালো game খেলা")]);
        assert_eq!(out.kept.len(), 1);
    }

    #[test]
    fn filter_keeps_valid_bengali_sentence() {
        let out = filter_noise(vec![raw("1", "ভালো খেলা আজ")]);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].text, "ভালো খেলা আজ");
    }

    #[test]
    fn filter_partitions_input() {
        let input: Vec<RawComment> = vec![
            raw("1", "ভালো খেলা"),
            raw("2", ""),
            raw("3", "ভালো খেলা"),
            raw("4", "one two three"),
        ];
        let n = input.len();
        let out = filter_noise(input);
        assert_eq!(out.kept.len() + out.discarded.len(), n);
    }

    #[test]
    fn merge_annotations_routes_unresolved_to_review() {
        let comments = vec![raw("1", "ভালো খেলা"), raw("2", "খারাপ দল")];
        let records = vec![
            AnnotationRecord::new("1", [P, P, U]).unwrap(),
            AnnotationRecord::new("2", [N, U, P]).unwrap(),
        ];
        let merged = merge_annotations(&comments, &records).unwrap();
        assert_eq!(merged.corpus.len(), 1);
        assert_eq!(merged.corpus.entries()[0].label, P);
        assert_eq!(merged.unresolved.len(), 1);
        assert_eq!(merged.unresolved[0].comment_id, "2");
    }

    #[test]
    fn merge_annotations_missing_record_is_error() {
        let comments = vec![raw("1", "ভালো খেলা")];
        assert!(merge_annotations(&comments, &[]).is_err());
    }

    #[test]
    fn annotation_tsv_round_trip() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            "comment_id\tlabel_a\tlabel_b\tlabel_c\nc9\tnegative\tneutral\tnegative\n"
        )
        .unwrap();
        let records = load_annotations(f.path()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].labels, [N, U, N]);
        let out = tempfile::NamedTempFile::new().unwrap();
        save_review_file(&records, out.path()).unwrap();
        let reloaded = load_annotations(out.path()).unwrap();
        assert_eq!(records, reloaded);
    }
}
