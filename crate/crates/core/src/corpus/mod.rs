//! Labeled text corpora: samples, loading, curation and summary statistics.
//!
//! A [`Corpus`] is an ordered, immutable collection of [`Sample`]s. Curation
//! operations ([`remove_generators`], [`substitute_generators`]) never modify
//! their input; they return a new corpus with an extra [`CurationStep`]
//! appended to its provenance.

mod curate;
mod io;
mod stats;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curate::{remove_generators, substitute_generators, Substitution, SubstituteOptions};
pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus, CorpusFormat, LoadOptions};
pub use stats::{corpus_stats, StatsTable};

/// Generator id used for human-authored text.
pub const HUMAN_GENERATOR: &str = "human";

/// Ground-truth class of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Ai,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Human, Label::Ai];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Ai => "ai",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "human" => Some(Label::Human),
            "ai" => Some(Label::Ai),
            _ => None,
        }
    }

    /// 1.0 for AI, 0.0 for human. AI is the positive class throughout.
    pub fn indicator(self) -> f64 {
        match self {
            Label::Human => 0.0,
            Label::Ai => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Human => Label::Ai,
            Label::Ai => Label::Human,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub split: Split,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label, split: Split) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            generator: None,
            domain: None,
            split,
        }
    }

    pub fn with_generator(mut self, generator: impl Into<String>) -> Self {
        self.generator = Some(generator.into());
        self
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    /// Generator key used for grouping. Human samples without an explicit
    /// generator group under `"human"`, AI samples without one under `"unknown"`.
    pub fn generator_key(&self) -> &str {
        match (&self.generator, self.label) {
            (Some(g), _) => g,
            (None, Label::Human) => HUMAN_GENERATOR,
            (None, Label::Ai) => "unknown",
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::InvalidSample {
                id: self.id.clone(),
                reason: "id is empty".into(),
            });
        }
        if self.text.trim().is_empty() {
            return Err(CorpusError::InvalidSample {
                id: self.id.clone(),
                reason: "text is empty after trimming whitespace".into(),
            });
        }
        let generator_is_human = self.generator.as_deref() == Some(HUMAN_GENERATOR);
        match self.label {
            Label::Human if self.generator.is_some() && !generator_is_human => {
                Err(CorpusError::InvalidSample {
                    id: self.id.clone(),
                    reason: format!(
                        "human-labeled sample has generator '{}'",
                        self.generator.as_deref().unwrap_or_default()
                    ),
                })
            }
            Label::Ai if generator_is_human => Err(CorpusError::InvalidSample {
                id: self.id.clone(),
                reason: "ai-labeled sample has generator 'human'".into(),
            }),
            _ => Ok(()),
        }
    }
}

/// A recorded curation operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CurationStep {
    RemoveGenerators {
        generators: Vec<String>,
        splits: Vec<Split>,
        removed: usize,
    },
    SubstituteGenerators {
        generators: Vec<String>,
        replacement: String,
        removed: usize,
        inserted: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    samples: Vec<Sample>,
    provenance: Vec<CurationStep>,
}

impl Corpus {
    /// Builds a corpus, checking every sample invariant and id uniqueness.
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self, CorpusError> {
        Self::with_provenance(name, samples, Vec::new())
    }

    pub(crate) fn with_provenance(
        name: impl Into<String>,
        samples: Vec<Sample>,
        provenance: Vec<CurationStep>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: s.id.clone() });
            }
        }
        Ok(Self {
            name: name.into(),
            samples,
            provenance,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            samples: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn provenance(&self) -> &[CurationStep] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Concatenates corpora in order. Ids must stay unique across the inputs.
    pub fn concat(name: impl Into<String>, parts: &[Corpus]) -> Result<Self, CorpusError> {
        let samples = parts.iter().flat_map(|c| c.samples.iter().cloned()).collect();
        let provenance = parts.iter().flat_map(|c| c.provenance.iter().cloned()).collect();
        Self::with_provenance(name, samples, provenance)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown {field} value '{value}'")]
    UnknownValue {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: unknown key '{key}' (strict mode)")]
    UnknownKey { line: usize, key: String },
    #[error("duplicate sample id '{id}'")]
    DuplicateId { id: String },
    #[error("invalid sample '{id}': {reason}")]
    InvalidSample { id: String, reason: String },
    #[error("curation error: {0}")]
    Curation(String),
    #[error("generator(s) {generators:?} matched no sample in splits {splits:?}")]
    NoMatch {
        generators: Vec<String>,
        splits: Vec<Split>,
    },
    #[error(
        "replacement '{replacement}' has {provided} samples but {expected} are being removed \
         (pass allow_count_mismatch to permit)"
    )]
    CountMismatch {
        replacement: String,
        expected: usize,
        provided: usize,
    },
    #[error("replacement '{replacement}' sample '{id}' is {what}; replacements must be ai-labeled train samples")]
    ReplacementViolation {
        replacement: String,
        id: String,
        what: &'static str,
    },
}
