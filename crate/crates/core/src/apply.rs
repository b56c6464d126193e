//! Classifying category-tagged comments with a trained 3-class model and
//! reporting per-category sentiment percentages.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::tsv;
use crate::error::Error;
use crate::model::SentimentClassifier;
use crate::Result;

/// A comment tagged with one of the declared categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizedComment {
    pub category: String,
    pub text: String,
}

/// Percentages per category. `percent` entries are rounded half-up to
/// integers; `proportion` keeps the exact values for downstream use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub count: usize,
    /// Label-code order: negative, neutral, positive.
    pub label_counts: [usize; 3],
    pub percent: [u32; 3],
    pub proportion: [f64; 3],
}

/// Per-category sentiment breakdown plus categories that were declared but
/// empty (omitted with a warning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySentimentTable {
    pub rows: Vec<CategoryRow>,
    pub omitted_empty: Vec<String>,
}

impl CategorySentimentTable {
    fn ensure_non_empty(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Validation("category table has no rows".into()));
        }
        Ok(())
    }

    pub fn render_text(&self) -> Result<String> {
        self.ensure_non_empty()?;
        let mut out = format!(
            "{:<16} {:>7} {:>9} {:>8} {:>9}\n",
            "category", "count", "negative", "neutral", "positive"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>7} {:>8}% {:>7}% {:>8}%\n",
                row.category, row.count, row.percent[0], row.percent[1], row.percent[2]
            ));
        }
        for category in &self.omitted_empty {
            out.push_str(&format!("{category:<16} omitted: no comments\n"));
        }
        Ok(out)
    }

    pub fn render_csv(&self) -> Result<String> {
        self.ensure_non_empty()?;
        let mut out = String::from(
            "category,count,negative_percent,neutral_percent,positive_percent,negative_proportion,neutral_proportion,positive_proportion\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.category,
                row.count,
                row.percent[0],
                row.percent[1],
                row.percent[2],
                row.proportion[0],
                row.proportion[1],
                row.proportion[2]
            ));
        }
        Ok(out)
    }
}

/// Half-up integer rounding of a percentage.
fn percent_round(p: f64) -> u32 {
    (p * 100.0).round() as u32
}

/// Classifies every comment and tallies per-category percentages.
///
/// The declared category order is preserved; declared categories without
/// comments are omitted from the rows and listed in `omitted_empty`.
pub fn analyze_categories<M: SentimentClassifier + ?Sized>(
    comments: &[CategorizedComment],
    declared: &[String],
    model: &M,
) -> Result<CategorySentimentTable> {
    if model.num_classes() != 3 {
        return Err(Error::ArityMismatch {
            message: format!(
                "category analysis needs a 3-class model, got {} classes",
                model.num_classes()
            ),
        });
    }
    if declared.is_empty() {
        return Err(Error::Validation("no categories declared".into()));
    }
    let mut counts: IndexMap<&str, [usize; 3]> =
        declared.iter().map(|c| (c.as_str(), [0usize; 3])).collect();
    for comment in comments {
        let slot = counts.get_mut(comment.category.as_str()).ok_or_else(|| {
            Error::Validation(format!(
                "comment category {:?} is not in the declared set",
                comment.category
            ))
        })?;
        let label = model.predict_label(&comment.text)?;
        slot[label.code()] += 1;
    }
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for (category, label_counts) in counts {
        let count: usize = label_counts.iter().sum();
        if count == 0 {
            omitted.push(category.to_string());
            continue;
        }
        let proportion = [
            label_counts[0] as f64 / count as f64,
            label_counts[1] as f64 / count as f64,
            label_counts[2] as f64 / count as f64,
        ];
        rows.push(CategoryRow {
            category: category.to_string(),
            count,
            label_counts,
            percent: [
                percent_round(proportion[0]),
                percent_round(proportion[1]),
                percent_round(proportion[2]),
            ],
            proportion,
        });
    }
    Ok(CategorySentimentTable {
        rows,
        omitted_empty: omitted,
    })
}

const CATEGORY_HEADER: &str = "category\ttext";

/// Loads `category<TAB>text` rows; every category must be declared.
pub fn load_categorized(
    path: impl AsRef<Path>,
    declared: &[String],
) -> Result<Vec<CategorizedComment>> {
    let path = path.as_ref();
    let rows = tsv::read_rows(path, CATEGORY_HEADER)?;
    let mut comments = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let [category, body] = match <[String; 2]>::try_from(fields) {
            Ok(f) => f,
            Err(f) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected 2 tab-separated fields, found {}", f.len()),
                ))
            }
        };
        if !declared.iter().any(|d| d == &category) {
            return Err(Error::parse(
                path,
                line,
                format!("category {category:?} is not in the declared set {declared:?}"),
            ));
        }
        if body.trim().is_empty() {
            return Err(Error::parse(path, line, "empty comment text"));
        }
        comments.push(CategorizedComment {
            category,
            text: body,
        });
    }
    Ok(comments)
}
