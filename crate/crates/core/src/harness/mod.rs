//! Config-driven experiment runner.
//!
//! A run goes ingest, curate, train scorers, stack, fit ensemble, evaluate.
//! Each stage persists its artifacts under the output directory together with
//! a key over everything it depends on, so a later invocation reuses what is
//! still valid and recomputes the rest.

mod config;
mod eval;
mod run;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::ensemble::EnsembleError;
use crate::metrics::MetricsError;
use crate::scorers::ScorerError;

pub use config::{
    apply_override, fingerprint, load_config, parse_config, seed_override_from_env, CorpusDecl, CurationDecl,
    EnsembleSection, ExperimentConfig, LoadedConfig, ScorerDecl, SubstitutionDecl, ZeroShotDecl, SEED_ENV,
};
pub use eval::{detect, evaluate_features, load_model, zero_shot_eval, BundleEntry, ScorerBundle};
pub use run::{run_experiment, Curated, ExperimentReport, NamedReport, Run, StatsPair, VOTING_NOTE};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("scorer manifest mismatch: model expects {expected:?}, provided {provided:?}")]
    ManifestMismatch {
        expected: Vec<String>,
        provided: Vec<String>,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
    #[error("output directory {0} is in use by another run (delete its .lock file if that run is gone)")]
    Locked(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Problems with what the caller supplied, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Validation(_) | HarnessError::Input(_) | HarnessError::ManifestMismatch { .. }
        )
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(StageError) -> Self {
        move |source| HarnessError::Stage { stage, source }
    }
}

impl From<EnsembleError> for HarnessError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::ManifestMismatch { expected, provided } => {
                HarnessError::ManifestMismatch { expected, provided }
            }
            other => HarnessError::Stage {
                stage: "predict",
                source: other.into(),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    CorpusFile {
        path: String,
        #[source]
        source: CorpusError,
    },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Artifact(String),
}

/// What a run produced and how long each stage took.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_fingerprint: String,
    pub version: String,
    /// Artifact name → path relative to the output directory.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub timings_ms: BTreeMap<String, u64>,
    /// Stages whose artifacts were still valid and were loaded instead of recomputed.
    pub reused: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(HarnessError::Locked(dir.display().to_string()))
            }
            Err(source) => Err(HarnessError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| StageError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| StageError::Artifact(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| StageError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StageError> {
    let file = File::open(path).map_err(|source| StageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| StageError::Artifact(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(HarnessError::Locked(_))));
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn validation_errors_are_classified() {
        assert!(HarnessError::Validation("x".into()).is_validation());
        assert!(HarnessError::Input("x".into()).is_validation());
        let stage = HarnessError::Stage {
            stage: "curate",
            source: StageError::Artifact("x".into()),
        };
        assert!(!stage.is_validation());
        assert!(stage.to_string().starts_with("curate stage failed"));
    }
}
