//! Classification metrics over the two classes, with AI as the positive class.
//!
//! Precision or recall with a zero denominator is 0, and so is the F1 of a
//! class whose precision and recall are both 0. Macro averages are taken over
//! both classes even when one of them is absent from `y_true`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("y_true has {truth} labels but y_pred has {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("cannot evaluate an empty label set")]
    Empty,
    #[error("{} sample(s) lack the '{field}' field: {}", ids.len(), ids.iter().take(10).cloned().collect::<Vec<_>>().join(", "))]
    MissingCategory { field: &'static str, ids: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[Label], y_pred: &[Label]) -> Result<Self, MetricsError> {
        check_lengths(y_true, y_pred)?;
        let mut m = Self::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t, p) {
                (Label::Ai, Label::Ai) => m.tp += 1,
                (Label::Human, Label::Ai) => m.fp += 1,
                (Label::Ai, Label::Human) => m.fn_ += 1,
                (Label::Human, Label::Human) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `(correct, predicted as class, actually class)` for a class.
    fn class_counts(&self, class: Label) -> (usize, usize, usize) {
        match class {
            Label::Ai => (self.tp, self.tp + self.fp, self.tp + self.fn_),
            Label::Human => (self.tn, self.tn + self.fn_, self.tn + self.fp),
        }
    }
}

fn check_lengths(y_true: &[Label], y_pred: &[Label]) -> Result<(), MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerClassCorrect {
    pub human: usize,
    pub ai: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub acc: f64,
    pub f_macro: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: BTreeMap<Label, ClassMetrics>,
    pub per_class_correct: PerClassCorrect,
    /// Category field name → category value → accuracy.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<String, BTreeMap<String, CategoryAccuracy>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

pub fn evaluate(y_true: &[Label], y_pred: &[Label]) -> Result<EvalReport, MetricsError> {
    let cm = ConfusionMatrix::from_labels(y_true, y_pred)?;
    let mut per_class = BTreeMap::new();
    let mut notes = Vec::new();
    for class in Label::ALL {
        let (correct, predicted, actual) = cm.class_counts(class);
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if actual == 0 {
            notes.push(format!(
                "class '{class}' is absent from y_true; its recall is 0 by convention"
            ));
        }
        per_class.insert(
            class,
            ClassMetrics {
                precision,
                recall,
                f1,
                support: actual,
                correct,
            },
        );
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / 2.0;
    Ok(EvalReport {
        n: cm.total(),
        acc: ratio(cm.tp + cm.tn, cm.total()),
        f_macro: mean(|m| m.f1),
        precision_macro: mean(|m| m.precision),
        recall_macro: mean(|m| m.recall),
        confusion: cm,
        per_class_correct: PerClassCorrect {
            human: cm.tn,
            ai: cm.tp,
        },
        per_class,
        per_category: BTreeMap::new(),
        notes,
        config_fingerprint: None,
    })
}

pub fn per_class_correct(y_true: &[Label], y_pred: &[Label]) -> Result<PerClassCorrect, MetricsError> {
    let cm = ConfusionMatrix::from_labels(y_true, y_pred)?;
    Ok(PerClassCorrect {
        human: cm.tn,
        ai: cm.tp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryField {
    Domain,
    Generator,
}

impl CategoryField {
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryField::Domain => "domain",
            CategoryField::Generator => "generator",
        }
    }

    fn value(self, s: &Sample) -> Option<&str> {
        match self {
            CategoryField::Domain => s.domain.as_deref(),
            CategoryField::Generator => s.generator.as_deref(),
        }
    }
}

/// Accuracy per distinct value of `field`; `preds` aligns with `samples`.
pub fn category_accuracy<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    preds: &[Label],
    field: CategoryField,
) -> Result<BTreeMap<String, CategoryAccuracy>, MetricsError> {
    let samples: Vec<&Sample> = samples.into_iter().collect();
    if samples.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            truth: samples.len(),
            pred: preds.len(),
        });
    }
    let missing: Vec<String> = samples
        .iter()
        .filter(|s| field.value(s).is_none())
        .map(|s| s.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingCategory {
            field: field.as_str(),
            ids: missing,
        });
    }
    let mut out: BTreeMap<String, CategoryAccuracy> = BTreeMap::new();
    for (s, &p) in samples.iter().zip(preds) {
        let entry = out
            .entry(field.value(s).unwrap_or_default().to_string())
            .or_insert(CategoryAccuracy {
                n: 0,
                correct: 0,
                accuracy: 0.0,
            });
        entry.n += 1;
        entry.correct += (s.label == p) as usize;
    }
    for c in out.values_mut() {
        c.accuracy = ratio(c.correct, c.n);
    }
    Ok(out)
}

/// A row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub acc: f64,
    pub f_macro: f64,
    pub precision: f64,
    pub recall: f64,
}

impl TableRow {
    pub fn from_report(dataset: impl Into<String>, r: &EvalReport) -> Self {
        Self {
            dataset: dataset.into(),
            acc: r.acc,
            f_macro: r.f_macro,
            precision: r.precision_macro,
            recall: r.recall_macro,
        }
    }
}

/// Renders `Dataset | Acc | F_macro | Pre | Rec` with three decimals.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Dataset", "Acc", "F_macro", "Pre", "Rec"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                format!("{:.3}", r.acc),
                format!("{:.3}", r.f_macro),
                format!("{:.3}", r.precision),
                format!("{:.3}", r.recall),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].chars().count())
                .chain(std::iter::once(header[i].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |vals: &[&str]| -> String {
        let mut s = String::from("|");
        for (v, w) in vals.iter().zip(&widths) {
            let _ = write!(s, " {v:<w$} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(&header);
    out.push('|');
    for w in &widths {
        out.push_str(&"-".repeat(w + 2));
        out.push('|');
    }
    out.push('\n');
    for c in &cells {
        let refs: Vec<&str> = c.iter().map(String::as_str).collect();
        out.push_str(&line(&refs));
    }
    out.push_str("Pre and Rec are macro-averaged over the human and ai classes.\n");
    out
}
