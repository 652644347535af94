//! Evaluation of a fitted model: held-out test rows, zero-shot corpora and
//! single texts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{read_json_file, write_json_file, HarnessError, StageError};
use crate::corpus::{Corpus, Sample};
use crate::ensemble::{stack_samples, EnsembleModel, StackedFeatures, Verdict};
use crate::metrics::{category_accuracy, evaluate, CategoryField, EvalReport};
use crate::scorers::{load_prob_files, BuiltinScorer, RemoteConfig, RemoteScorer, Scorer};

/// Predicts every row of `features` and scores the predictions against the
/// row labels. `samples` must be the samples the rows were built from, in order;
/// they supply the category fields.
pub fn evaluate_features(
    model: &EnsembleModel,
    features: &StackedFeatures,
    samples: &[&Sample],
    fields: &[CategoryField],
) -> Result<EvalReport, StageError> {
    if features.rows.len() != samples.len() || features.rows.iter().zip(samples).any(|(r, s)| r.id != s.id) {
        return Err(StageError::Artifact(
            "stacked rows do not line up with the corpus samples".into(),
        ));
    }
    let verdicts = model.predict_all(features)?;
    let preds: Vec<_> = verdicts.iter().map(|v| v.label).collect();
    let mut report = evaluate(&features.labels(), &preds)?;
    for &field in fields {
        match category_accuracy(samples.iter().copied(), &preds, field) {
            Ok(per) => {
                report.per_category.insert(field.as_str().to_string(), per);
            }
            Err(crate::metrics::MetricsError::MissingCategory { ids, .. }) => {
                report.notes.push(format!(
                    "per-{} accuracy omitted: {} sample(s) have no {} value",
                    field.as_str(),
                    ids.len(),
                    field.as_str()
                ));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(report)
}

fn check_scorers(model: &EnsembleModel, scorers: &[&dyn Scorer]) -> Result<(), HarnessError> {
    let provided: Vec<String> = scorers.iter().map(|s| s.id().to_string()).collect();
    model.check_manifest(&provided)?;
    Ok(())
}

/// Evaluates a fitted model on every sample of `corpus`, whatever its split.
/// Nothing is refit.
pub fn zero_shot_eval(
    model: &EnsembleModel,
    corpus: &Corpus,
    scorers: &[&dyn Scorer],
    fields: &[CategoryField],
) -> Result<EvalReport, HarnessError> {
    check_scorers(model, scorers)?;
    let samples: Vec<&Sample> = corpus.iter().collect();
    let features = stack_samples(&samples, scorers).map_err(|e| HarnessError::Stage {
        stage: "zero-shot",
        source: e.into(),
    })?;
    evaluate_features(model, &features, &samples, fields).map_err(HarnessError::stage("zero-shot"))
}

/// Scores one raw text and predicts it.
pub fn detect(model: &EnsembleModel, scorers: &[&dyn Scorer], text: &str) -> Result<Verdict, HarnessError> {
    check_scorers(model, scorers)?;
    if let Some(s) = scorers.iter().find(|s| !s.accepts_raw_text()) {
        return Err(HarnessError::Input(format!(
            "scorer '{}' looks up precomputed probabilities by sample id and cannot score raw text",
            s.id()
        )));
    }
    if text.trim().is_empty() {
        return Err(HarnessError::Input("input text is empty".into()));
    }
    let mut row = Vec::with_capacity(2 * scorers.len());
    for s in scorers {
        let p = s.score(text).map_err(|e| HarnessError::Stage {
            stage: "detect",
            source: e.into(),
        })?;
        row.extend(p.to_array());
    }
    Ok(model.predict(&row)?)
}

/// How to rebuild the scorers of a run, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerBundle {
    pub scorers: Vec<BundleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BundleEntry {
    /// A trained scorer saved next to the bundle.
    Builtin { id: String, file: PathBuf },
    /// Probabilities must be supplied per corpus.
    File { id: String },
    Remote { id: String, params: RemoteConfig },
}

impl BundleEntry {
    pub fn id(&self) -> &str {
        match self {
            BundleEntry::Builtin { id, .. } | BundleEntry::File { id } | BundleEntry::Remote { id, .. } => id,
        }
    }
}

impl ScorerBundle {
    pub fn ids(&self) -> Vec<String> {
        self.scorers.iter().map(|e| e.id().to_string()).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(HarnessError::Input(format!("scorer bundle {} not found", path.display())));
        }
        read_json_file(path).map_err(|e| HarnessError::Input(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StageError> {
        write_json_file(path.as_ref(), self)
    }

    /// Builds the scorers. Builtin files resolve against `base`; file scorers
    /// take their probabilities from `prob_files`.
    pub fn instantiate(
        &self,
        base: &Path,
        prob_files: &BTreeMap<String, Vec<PathBuf>>,
    ) -> Result<Vec<Arc<dyn Scorer>>, HarnessError> {
        let load = |e: crate::scorers::ScorerError| HarnessError::Stage {
            stage: "load scorers",
            source: e.into(),
        };
        self.scorers
            .iter()
            .map(|entry| -> Result<Arc<dyn Scorer>, HarnessError> {
                Ok(match entry {
                    BundleEntry::Builtin { file, .. } => {
                        let path = base.join(file);
                        if !path.is_file() {
                            return Err(HarnessError::Input(format!("scorer file {} not found", path.display())));
                        }
                        Arc::new(BuiltinScorer::load(path).map_err(load)?)
                    }
                    BundleEntry::File { id } => {
                        let paths = prob_files.get(id).ok_or_else(|| {
                            HarnessError::Input(format!(
                                "scorer '{id}' reads precomputed probabilities; supply a probability file for it"
                            ))
                        })?;
                        Arc::new(load_prob_files(paths, id).map_err(load)?)
                    }
                    BundleEntry::Remote { id, params } => Arc::new(RemoteScorer::new(id.clone(), params.clone()).map_err(load)?),
                })
            })
            .collect()
    }
}

/// Loads a model file, mapping a missing file to an input error.
pub fn load_model(path: &Path) -> Result<EnsembleModel, HarnessError> {
    if fs::metadata(path).is_err() {
        return Err(HarnessError::Input(format!("model file {} not found", path.display())));
    }
    EnsembleModel::load(path).map_err(|e| HarnessError::Stage {
        stage: "load model",
        source: e.into(),
    })
}
