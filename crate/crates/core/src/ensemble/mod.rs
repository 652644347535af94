//! Probability stacking and the soft-voting meta-classifier.
//!
//! Each sample's stacked row is `[p_human^1, p_ai^1, ..., p_human^k, p_ai^k]`
//! in scorer-manifest order. Four meta-learners are fit on those rows:
//! logistic regression and a linear SVM on standardized rows, Gaussian naive
//! Bayes and a random forest on raw rows. A [`Verdict`] averages their
//! probability vectors with equal weight; an exact tie goes to human.

mod forest;
mod gnb;
mod logistic;
mod standardize;
mod svm;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, Split};
use crate::scorers::{ProbVector, Scorer, ScorerError, PROB_SUM_TOLERANCE};

pub use forest::{fit_random_forest, Forest, ForestConfig, Node, Tree};
pub use gnb::{fit_gnb, GnbModel};
pub use logistic::{fit_logistic, LogisticModel, LrConfig};
pub use standardize::Standardizer;
pub use svm::{fit_linear_svm, hinge_objective_subgradient, SvmConfig, SvmModel};

pub const MODEL_FORMAT_VERSION: &str = "1";

pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::Human => 0,
        Label::Ai => 1,
    }
}

/// One row per sample, in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedRow {
    pub id: String,
    pub label: Label,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedFeatures {
    pub manifest: Vec<String>,
    pub rows: Vec<StackedRow>,
}

impl StackedFeatures {
    pub fn width(&self) -> usize {
        2 * self.manifest.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Checks row widths, the `[0, 1]` range and the pairwise sum-to-one rule.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let width = self.width();
        for row in &self.rows {
            if row.features.len() != width {
                return Err(EnsembleError::WidthMismatch {
                    expected: width,
                    got: row.features.len(),
                });
            }
            let bad = |what: &str| EnsembleError::InvalidFeatures(format!("row '{}': {what}", row.id));
            if row.features.iter().any(|x| !x.is_finite()) {
                return Err(bad("non-finite entry"));
            }
            if row.features.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(bad("entry outside [0, 1]"));
            }
            if row
                .features
                .chunks(2)
                .any(|p| (p[0] + p[1] - 1.0).abs() > PROB_SUM_TOLERANCE)
            {
                return Err(bad("probability pair does not sum to 1"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let features: Self = read_json(path.as_ref())?;
        features.validate()?;
        Ok(features)
    }
}

/// Scores every sample of `split` with every scorer and concatenates the
/// probability vectors in scorer order.
///
/// Lookup-based scorers are checked for full coverage before any scoring.
pub fn stack_features(
    corpus: &Corpus,
    scorers: &[&dyn Scorer],
    split: Split,
) -> Result<StackedFeatures, EnsembleError> {
    let samples: Vec<_> = corpus.split(split).collect();
    stack_samples(&samples, scorers).map_err(|e| match e {
        EnsembleError::EmptyInput => EnsembleError::EmptySplit(split),
        other => other,
    })
}

/// Like [`stack_features`], over an explicit list of samples.
pub fn stack_samples(
    samples: &[&crate::corpus::Sample],
    scorers: &[&dyn Scorer],
) -> Result<StackedFeatures, EnsembleError> {
    if samples.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    let manifest: Vec<String> = scorers.iter().map(|s| s.id().to_string()).collect();
    let mut unique = HashSet::new();
    if let Some(dup) = manifest.iter().find(|id| !unique.insert(id.as_str())) {
        return Err(EnsembleError::DuplicateScorer(dup.clone()));
    }
    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    for scorer in scorers {
        let missing = scorer.missing_ids(&ids);
        if !missing.is_empty() {
            return Err(EnsembleError::Coverage {
                scorer: scorer.id().to_string(),
                missing,
            });
        }
    }

    let mut rows: Vec<StackedRow> = samples
        .iter()
        .map(|s| StackedRow {
            id: s.id.clone(),
            label: s.label,
            features: Vec::with_capacity(2 * scorers.len()),
        })
        .collect();
    for scorer in scorers {
        let probs = scorer.score_samples(samples).map_err(|source| EnsembleError::Scoring {
            scorer: scorer.id().to_string(),
            source,
        })?;
        for (row, p) in rows.iter_mut().zip(probs) {
            row.features.extend(p.to_array());
        }
    }
    Ok(StackedFeatures { manifest, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub lr: LrConfig,
    pub rf: ForestConfig,
    pub svm: SvmConfig,
    pub gnb_eps: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr: LrConfig::default(),
            rf: ForestConfig::default(),
            svm: SvmConfig::default(),
            gnb_eps: 1e-9,
        }
    }
}

/// Probabilities of each meta-learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerLearner {
    pub lr: ProbVector,
    pub rf: ProbVector,
    pub gnb: ProbVector,
    pub svm: ProbVector,
}

impl PerLearner {
    pub fn all(&self) -> [ProbVector; 4] {
        [self.lr, self.rf, self.gnb, self.svm]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub prob: ProbVector,
    pub per_learner: PerLearner,
}

/// Arithmetic mean of probability vectors.
pub fn soft_vote(probs: &[ProbVector]) -> Result<ProbVector, ScorerError> {
    let n = probs.len() as f64;
    let h = probs.iter().map(|p| p.p_human()).sum::<f64>() / n;
    let a = probs.iter().map(|p| p.p_ai()).sum::<f64>() / n;
    ProbVector::new(h, a)
}

/// AI only when strictly more probable; exact ties go to human.
pub fn decide(prob: &ProbVector) -> Label {
    if prob.p_ai() > prob.p_human() {
        Label::Ai
    } else {
        Label::Human
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format_version: String,
    pub manifest: Vec<String>,
    pub seed: u64,
    pub config: EnsembleConfig,
    pub standardizer: Standardizer,
    pub lr: LogisticModel,
    pub gnb: GnbModel,
    pub rf: Forest,
    pub svm: SvmModel,
}

pub fn fit_ensemble(train: &StackedFeatures, cfg: &EnsembleConfig) -> Result<EnsembleModel, EnsembleError> {
    train.validate().map_err(|e| match e {
        EnsembleError::InvalidFeatures(m) if m.contains("non-finite") => EnsembleError::NonFinite(m),
        other => other,
    })?;
    fit_ensemble_rows(train.manifest.clone(), &train.matrix(), &train.labels(), cfg)
}

/// Fits the meta-learners on arbitrary finite rows of width `2 * manifest.len()`.
/// [`fit_ensemble`] is this plus the probability checks on stacked rows.
pub fn fit_ensemble_rows(
    manifest: Vec<String>,
    rows: &[Vec<f64>],
    labels: &[Label],
    cfg: &EnsembleConfig,
) -> Result<EnsembleModel, EnsembleError> {
    if rows.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    if rows.len() != labels.len() {
        return Err(EnsembleError::InvalidFeatures(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let width = 2 * manifest.len();
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(EnsembleError::WidthMismatch {
            expected: width,
            got: r.len(),
        });
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(EnsembleError::NonFinite("training rows".into()));
    }
    for label in Label::ALL {
        let n = labels.iter().filter(|&&l| l == label).count();
        if n == 0 {
            return Err(EnsembleError::SingleClass { missing: label });
        }
        if n < 2 {
            return Err(EnsembleError::TooFewSamples { label, min: 2 });
        }
    }

    let standardizer = Standardizer::fit(rows);
    let scaled = standardizer.transform_all(rows);
    let targets: Vec<f64> = labels.iter().map(|l| l.indicator()).collect();

    let (lr, _) = fit_logistic(&scaled, &targets, &cfg.lr);
    let gnb = fit_gnb(rows, labels, cfg.gnb_eps)?;
    let rf = fit_random_forest(rows, labels, &cfg.rf, cfg.seed)?;
    let svm = fit_linear_svm(&scaled, labels, &cfg.svm, cfg.seed)?;

    let model = EnsembleModel {
        format_version: MODEL_FORMAT_VERSION.to_string(),
        manifest,
        seed: cfg.seed,
        config: cfg.clone(),
        standardizer,
        lr,
        gnb,
        rf,
        svm,
    };
    model.check()?;
    Ok(model)
}

impl EnsembleModel {
    pub fn width(&self) -> usize {
        2 * self.manifest.len()
    }

    pub fn predict(&self, row: &[f64]) -> Result<Verdict, EnsembleError> {
        if row.len() != self.width() {
            return Err(EnsembleError::WidthMismatch {
                expected: self.width(),
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(EnsembleError::NonFinite("prediction row".into()));
        }
        let scaled = self.standardizer.transform(row);
        let per_learner = PerLearner {
            lr: ProbVector::from_p_ai(self.lr.p_ai(&scaled)),
            rf: self.rf.predict_proba(row),
            gnb: self.gnb.predict_proba(row),
            svm: self.svm.predict_proba(&scaled),
        };
        let prob = soft_vote(&per_learner.all())?;
        Ok(Verdict {
            label: decide(&prob),
            prob,
            per_learner,
        })
    }

    pub fn predict_all(&self, features: &StackedFeatures) -> Result<Vec<Verdict>, EnsembleError> {
        self.check_manifest(&features.manifest)?;
        features.rows.iter().map(|r| self.predict(&r.features)).collect()
    }

    /// Requires `provided` to equal the training manifest, order included.
    pub fn check_manifest(&self, provided: &[String]) -> Result<(), EnsembleError> {
        if provided != self.manifest.as_slice() {
            return Err(EnsembleError::ManifestMismatch {
                expected: self.manifest.clone(),
                provided: provided.to_vec(),
            });
        }
        Ok(())
    }

    fn check(&self) -> Result<(), EnsembleError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(EnsembleError::Format(format!(
                "unsupported model format version '{}'",
                self.format_version
            )));
        }
        if self.rf.trees.len() != self.config.rf.n_trees {
            return Err(EnsembleError::Format(format!(
                "model has {} trees, config says {}",
                self.rf.trees.len(),
                self.config.rf.n_trees
            )));
        }
        let d = self.width();
        let dims_ok = self.standardizer.mean.len() == d
            && self.standardizer.std.len() == d
            && self.lr.weights.len() == d
            && self.svm.weights.len() == d
            && self.gnb.means.iter().chain(&self.gnb.variances).all(|v| v.len() == d);
        if !dims_ok {
            return Err(EnsembleError::Format("parameter dimensions do not match manifest".into()));
        }
        let finite = self
            .standardizer
            .mean
            .iter()
            .chain(&self.standardizer.std)
            .chain(&self.lr.weights)
            .chain(&self.svm.weights)
            .chain(self.gnb.means.iter().flatten())
            .chain(self.gnb.variances.iter().flatten())
            .chain(&self.gnb.priors)
            .chain([&self.lr.bias, &self.svm.bias, &self.svm.platt.a, &self.svm.platt.b])
            .all(|x| x.is_finite());
        if !finite || self.standardizer.std.iter().any(|s| *s <= 0.0) {
            return Err(EnsembleError::Format("model contains non-finite or invalid parameters".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("model serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| EnsembleError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let model: Self = read_json(path.as_ref())?;
        model.check()?;
        Ok(model)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EnsembleError> {
    let bytes = serde_json::to_vec(value).map_err(|e| EnsembleError::Format(e.to_string()))?;
    fs::write(path, bytes).map_err(|source| EnsembleError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EnsembleError> {
    let bytes = fs::read(path).map_err(|source| EnsembleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| EnsembleError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no samples to stack")]
    EmptyInput,
    #[error("split '{0}' has no samples")]
    EmptySplit(Split),
    #[error("scorer id '{0}' appears more than once")]
    DuplicateScorer(String),
    #[error("scorer '{scorer}' has no probabilities for {} sample(s): {}", missing.len(), preview(missing))]
    Coverage { scorer: String, missing: Vec<String> },
    #[error("scorer '{scorer}' failed: {source}")]
    Scoring {
        scorer: String,
        #[source]
        source: ScorerError,
    },
    #[error("training rows contain no {missing} samples")]
    SingleClass { missing: Label },
    #[error("need at least {min} {label} samples")]
    TooFewSamples { label: Label, min: usize },
    #[error("non-finite feature value in {0}")]
    NonFinite(String),
    #[error("expected a row of width {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid stacked features: {0}")]
    InvalidFeatures(String),
    #[error("scorer manifest mismatch: model expects {expected:?}, provided {provided:?}")]
    ManifestMismatch {
        expected: Vec<String>,
        provided: Vec<String>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Prob(#[from] ScorerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;
    use crate::scorers::FileScorer;

    struct Fixed(&'static str, f64);

    impl Scorer for Fixed {
        fn id(&self) -> &str {
            self.0
        }
        fn score(&self, _: &str) -> Result<ProbVector, ScorerError> {
            Ok(ProbVector::from_p_ai(self.1))
        }
    }

    fn one_sample() -> Corpus {
        Corpus::new("c", vec![Sample::new("s", "text", Label::Ai, Split::Test)]).unwrap()
    }

    fn pv(h: f64, a: f64) -> ProbVector {
        ProbVector::new(h, a).unwrap()
    }

    #[test]
    fn rows_concatenate_in_manifest_order() {
        let c = one_sample();
        let (a, b) = (Fixed("a", 0.1), Fixed("b", 0.7));
        let f = stack_features(&c, &[&a, &b], Split::Test).unwrap();
        assert_eq!(f.manifest, ["a", "b"]);
        let row = &f.rows[0].features;
        assert_eq!(row.len(), 4);
        assert!((row[0] - 0.9).abs() < 1e-15 && row[1] == 0.1);
        assert!((row[2] - 0.3).abs() < 1e-15 && row[3] == 0.7);
        f.validate().unwrap();

        let one = stack_features(&c, &[&a], Split::Test).unwrap();
        assert_eq!(one.rows[0].features.len(), 2);
    }

    #[test]
    fn five_scorers_give_ten_columns() {
        let c = one_sample();
        let s: Vec<Fixed> = ["s1", "s2", "s3", "s4", "s5"].iter().map(|id| Fixed(id, 0.5)).collect();
        let refs: Vec<&dyn Scorer> = s.iter().map(|x| x as &dyn Scorer).collect();
        let f = stack_features(&c, &refs, Split::Test).unwrap();
        assert_eq!(f.rows[0].features.len(), 10);
    }

    #[test]
    fn empty_split_and_coverage_errors() {
        let c = one_sample();
        let a = Fixed("a", 0.5);
        assert!(matches!(
            stack_features(&c, &[&a], Split::Train),
            Err(EnsembleError::EmptySplit(Split::Train))
        ));
        let file = FileScorer::new("roberta", Default::default());
        let err = stack_features(&c, &[&file], Split::Test).unwrap_err();
        assert!(matches!(err, EnsembleError::Coverage { ref missing, .. } if missing == &["s"]));
        assert!(err.to_string().contains("s"));
    }

    #[test]
    fn soft_vote_arithmetic_and_ties() {
        let even = soft_vote(&[ProbVector::uniform(); 4]).unwrap();
        assert_eq!(even.to_array(), [0.5, 0.5]);
        assert_eq!(decide(&even), Label::Human);

        let p = soft_vote(&[pv(1.0, 0.0), pv(1.0, 0.0), pv(1.0, 0.0), pv(0.0, 1.0)]).unwrap();
        assert_eq!(p.to_array(), [0.75, 0.25]);
        assert_eq!(decide(&p), Label::Human);
        assert_eq!(decide(&pv(0.25, 0.75)), Label::Ai);
    }

    fn constant_rows(n_ai: usize, n_human: usize) -> StackedFeatures {
        let rows = (0..n_ai + n_human)
            .map(|i| StackedRow {
                id: format!("r{i}"),
                label: if i < n_ai { Label::Ai } else { Label::Human },
                features: vec![0.4, 0.6],
            })
            .collect();
        StackedFeatures {
            manifest: vec!["s".into()],
            rows,
        }
    }

    #[test]
    fn identical_rows_predict_majority_near_prior() {
        // 6 ai / 4 human, every row identical.
        // GNB: equal likelihoods, posterior = prior 0.6.
        // RF: no valid split, each tree's leaf = its bootstrap class share.
        // LR: only the bias moves; converges towards logit(0.6).
        // SVM: decision values constant, Platt gives smoothed prior 7/12.
        let f = constant_rows(6, 4);
        let m = fit_ensemble(&f, &EnsembleConfig::default()).unwrap();
        let v = m.predict(&[0.4, 0.6]).unwrap();
        assert_eq!(v.label, Label::Ai);
        assert!((v.per_learner.gnb.p_ai() - 0.6).abs() < 1e-12);
        assert!((v.per_learner.svm.p_ai() - 7.0 / 12.0).abs() < 1e-9);
        assert!(v.per_learner.lr.p_ai() > 0.5 && v.per_learner.lr.p_ai() < 0.6 + 1e-9);
        assert!((v.per_learner.rf.p_ai() - 0.6).abs() < 0.1);
        for p in v.per_learner.all() {
            assert!(p.p_ai() > 0.5, "{p:?}");
        }
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let mut one_class = constant_rows(3, 0);
        assert!(matches!(
            fit_ensemble(&one_class, &EnsembleConfig::default()),
            Err(EnsembleError::SingleClass { missing: Label::Human })
        ));
        one_class = constant_rows(3, 1);
        assert!(matches!(
            fit_ensemble(&one_class, &EnsembleConfig::default()),
            Err(EnsembleError::TooFewSamples { label: Label::Human, .. })
        ));
        let mut nan = constant_rows(2, 2);
        nan.rows[0].features[0] = f64::NAN;
        assert!(matches!(
            fit_ensemble(&nan, &EnsembleConfig::default()),
            Err(EnsembleError::NonFinite(_))
        ));
    }

    #[test]
    fn width_mismatch_on_predict() {
        let m = fit_ensemble(&constant_rows(2, 2), &EnsembleConfig::default()).unwrap();
        assert!(matches!(
            m.predict(&[0.5, 0.5, 0.5, 0.5]),
            Err(EnsembleError::WidthMismatch { expected: 2, got: 4 })
        ));
    }
}
