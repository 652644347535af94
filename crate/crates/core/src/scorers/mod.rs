//! Constituent detectors.
//!
//! Every scorer maps a text (or, for [`FileScorer`], a sample id) to a
//! [`ProbVector`]. Two scorers can be trained in-process ([`NgramLrScorer`],
//! [`PerplexityScorer`]); externally computed probabilities enter through
//! [`FileScorer`] or [`RemoteScorer`].

mod file;
mod ngram_lr;
mod perplexity;
mod remote;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;

pub use file::{load_prob_file, load_prob_files, parse_prob_file, save_prob_file, FileScorer};
pub use ngram_lr::{sparse_logistic_loss_grad, train_ngram_lr, NgramLrConfig, NgramLrScorer, SparseVec};
pub use perplexity::{train_perplexity_scorer, NgramLm, PerplexityConfig, PerplexityScorer};
pub use remote::{RemoteConfig, RemoteScorer};

/// Tolerance of the `p_human + p_ai == 1` invariant.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;
/// Tolerance applied to probabilities arriving from files or remote endpoints.
pub const INGEST_SUM_TOLERANCE: f64 = 1e-6;

/// Class probabilities `[p_human, p_ai]`; both in `[0, 1]`, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ProbVector {
    p_human: f64,
    p_ai: f64,
}

impl ProbVector {
    pub fn new(p_human: f64, p_ai: f64) -> Result<Self, ScorerError> {
        Self::with_tolerance(p_human, p_ai, PROB_SUM_TOLERANCE)
    }

    /// Validates against a looser sum tolerance and renormalizes so the
    /// stored vector meets [`PROB_SUM_TOLERANCE`].
    pub fn with_tolerance(p_human: f64, p_ai: f64, tolerance: f64) -> Result<Self, ScorerError> {
        let invalid = |reason: &str| ScorerError::InvalidProb {
            p_human,
            p_ai,
            reason: reason.to_string(),
        };
        if !p_human.is_finite() || !p_ai.is_finite() {
            return Err(invalid("non-finite entry"));
        }
        if !(0.0..=1.0).contains(&p_human) || !(0.0..=1.0).contains(&p_ai) {
            return Err(invalid("entry outside [0, 1]"));
        }
        let sum = p_human + p_ai;
        if (sum - 1.0).abs() > tolerance {
            return Err(invalid("entries do not sum to 1"));
        }
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Ok(Self {
                p_human: p_human / sum,
                p_ai: p_ai / sum,
            });
        }
        Ok(Self { p_human, p_ai })
    }

    /// Builds `[1 - p, p]`, clamping `p` into `[0, 1]`.
    pub fn from_p_ai(p_ai: f64) -> Self {
        let p = if p_ai.is_nan() { 0.5 } else { p_ai.clamp(0.0, 1.0) };
        Self {
            p_human: 1.0 - p,
            p_ai: p,
        }
    }

    pub fn uniform() -> Self {
        Self {
            p_human: 0.5,
            p_ai: 0.5,
        }
    }

    pub fn p_human(&self) -> f64 {
        self.p_human
    }

    pub fn p_ai(&self) -> f64 {
        self.p_ai
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.p_human, self.p_ai]
    }
}

impl TryFrom<[f64; 2]> for ProbVector {
    type Error = ScorerError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1])
    }
}

impl From<ProbVector> for [f64; 2] {
    fn from(p: ProbVector) -> Self {
        p.to_array()
    }
}

/// A constituent detector.
pub trait Scorer: Send + Sync {
    fn id(&self) -> &str;

    /// Scores raw text. Must be a pure function of `(self, text)`.
    fn score(&self, text: &str) -> Result<ProbVector, ScorerError>;

    fn score_sample(&self, sample: &Sample) -> Result<ProbVector, ScorerError> {
        self.score(&sample.text)
    }

    /// Scores many samples, preserving order.
    fn score_samples(&self, samples: &[&Sample]) -> Result<Vec<ProbVector>, ScorerError> {
        samples
            .iter()
            .map(|s| {
                self.score_sample(s).map_err(|e| ScorerError::AtSample {
                    id: s.id.clone(),
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Ids this scorer cannot score. Only lookup-based scorers return anything.
    fn missing_ids(&self, _ids: &[&str]) -> Vec<String> {
        Vec::new()
    }

    /// Whether [`Scorer::score`] works on arbitrary text.
    fn accepts_raw_text(&self) -> bool {
        true
    }
}

pub(crate) fn check_text(text: &str) -> Result<(), ScorerError> {
    if text.trim().is_empty() {
        Err(ScorerError::EmptyText)
    } else {
        Ok(())
    }
}

/// A trained in-process scorer in its persisted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinScorer {
    NgramLr(NgramLrScorer),
    Perplexity(PerplexityScorer),
}

impl BuiltinScorer {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self).map_err(|e| ScorerError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        fs::write(path, json).map_err(|source| ScorerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ScorerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| ScorerError::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    }

    fn inner(&self) -> &dyn Scorer {
        match self {
            BuiltinScorer::NgramLr(s) => s,
            BuiltinScorer::Perplexity(s) => s,
        }
    }
}

impl Scorer for BuiltinScorer {
    fn id(&self) -> &str {
        self.inner().id()
    }

    fn score(&self, text: &str) -> Result<ProbVector, ScorerError> {
        self.inner().score(text)
    }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("text is empty after trimming whitespace")]
    EmptyText,
    #[error("invalid probability vector [{p_human}, {p_ai}]: {reason}")]
    InvalidProb {
        p_human: f64,
        p_ai: f64,
        reason: String,
    },
    #[error("scorer '{scorer}' scores by sample id only; raw text is not supported")]
    RawTextUnsupported { scorer: String },
    #[error("scorer '{scorer}' has no probabilities for id '{id}'")]
    UnknownId { scorer: String, id: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sample '{id}': {source}")]
    AtSample {
        id: String,
        #[source]
        source: Box<ScorerError>,
    },
    #[error("line {line}: {source}")]
    InvalidRow {
        line: usize,
        #[source]
        source: Box<ScorerError>,
    },
    #[error("duplicate probability row for id '{id}' and scorer '{scorer}'")]
    Duplicate { id: String, scorer: String },
    #[error("training data must contain both classes; missing {missing}")]
    SingleClass { missing: &'static str },
    #[error("training data contains no human-authored samples")]
    NoHumanSamples,
    #[error("invalid scorer configuration: {0}")]
    InvalidConfig(String),
    #[error("remote endpoint failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("invalid response from remote endpoint: {0}")]
    InvalidResponse(String),
    #[error("expected {expected} probability rows, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("batch of {size} texts exceeds configured maximum {max}")]
    BatchTooLarge { size: usize, max: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(0.12, 0.88).is_ok());
        assert!(ProbVector::new(0.6, 0.6).is_err());
        assert!(ProbVector::new(1.2, -0.2).is_err());
        assert!(ProbVector::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn ingest_tolerance_renormalizes() {
        let p = ProbVector::with_tolerance(0.3, 0.7 + 5e-7, INGEST_SUM_TOLERANCE).unwrap();
        assert!((p.p_human() + p.p_ai() - 1.0).abs() <= PROB_SUM_TOLERANCE);
        assert!(ProbVector::with_tolerance(0.3, 0.7 + 5e-6, INGEST_SUM_TOLERANCE).is_err());
    }

    #[test]
    fn serializes_as_pair() {
        let p = ProbVector::new(0.25, 0.75).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.25,0.75]");
        let back: ProbVector = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ProbVector>("[1.2,-0.2]").is_err());
    }
}
