//! Precomputed probabilities keyed by sample id.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ProbVector, Scorer, ScorerError, INGEST_SUM_TOLERANCE};
use crate::corpus::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbRow {
    id: String,
    scorer: String,
    p_human: f64,
    p_ai: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileScorer {
    scorer_id: String,
    table: BTreeMap<String, ProbVector>,
}

impl FileScorer {
    pub fn new(scorer_id: impl Into<String>, table: BTreeMap<String, ProbVector>) -> Self {
        Self {
            scorer_id: scorer_id.into(),
            table,
        }
    }

    pub fn table(&self) -> &BTreeMap<String, ProbVector> {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn score_by_id(&self, id: &str) -> Result<ProbVector, ScorerError> {
        self.table
            .get(id)
            .copied()
            .ok_or_else(|| ScorerError::UnknownId {
                scorer: self.scorer_id.clone(),
                id: id.to_string(),
            })
    }
}

impl Scorer for FileScorer {
    fn id(&self) -> &str {
        &self.scorer_id
    }

    fn score(&self, _text: &str) -> Result<ProbVector, ScorerError> {
        Err(ScorerError::RawTextUnsupported {
            scorer: self.scorer_id.clone(),
        })
    }

    fn score_sample(&self, sample: &Sample) -> Result<ProbVector, ScorerError> {
        self.score_by_id(&sample.id)
    }

    fn missing_ids(&self, ids: &[&str]) -> Vec<String> {
        ids.iter()
            .filter(|id| !self.table.contains_key(**id))
            .map(|id| id.to_string())
            .collect()
    }

    fn accepts_raw_text(&self) -> bool {
        false
    }
}

/// Loads the rows of a probability JSONL file whose `scorer` equals `scorer_id`.
pub fn load_prob_file(path: impl AsRef<Path>, scorer_id: &str) -> Result<FileScorer, ScorerError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ScorerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_prob_file(BufReader::new(file), scorer_id)
}

pub fn parse_prob_file(reader: impl BufRead, scorer_id: &str) -> Result<FileScorer, ScorerError> {
    let mut table = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ScorerError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ProbRow = serde_json::from_str(&line).map_err(|e| ScorerError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let prob = ProbVector::with_tolerance(row.p_human, row.p_ai, INGEST_SUM_TOLERANCE)
            .map_err(|e| ScorerError::InvalidRow {
                line: line_no,
                source: Box::new(e),
            })?;
        if !seen.insert((row.id.clone(), row.scorer.clone())) {
            return Err(ScorerError::Duplicate {
                id: row.id,
                scorer: row.scorer,
            });
        }
        if row.scorer == scorer_id {
            table.insert(row.id, prob);
        }
    }
    Ok(FileScorer::new(scorer_id, table))
}

/// Loads several probability files for one scorer into a single table.
/// An id may appear in only one of them.
pub fn load_prob_files<P: AsRef<Path>>(paths: &[P], scorer_id: &str) -> Result<FileScorer, ScorerError> {
    let mut table = BTreeMap::new();
    for path in paths {
        for (id, p) in load_prob_file(path, scorer_id)?.table {
            if table.insert(id.clone(), p).is_some() {
                return Err(ScorerError::Duplicate {
                    id,
                    scorer: scorer_id.to_string(),
                });
            }
        }
    }
    Ok(FileScorer::new(scorer_id, table))
}

/// Writes the table as probability JSONL, sorted by id.
pub fn save_prob_file(scorer: &FileScorer, path: impl AsRef<Path>) -> Result<(), ScorerError> {
    let path = path.as_ref();
    let io_err = |source| ScorerError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for (id, p) in &scorer.table {
        let row = ProbRow {
            id: id.clone(),
            scorer: scorer.scorer_id.clone(),
            p_human: p.p_human(),
            p_ai: p.p_ai(),
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
