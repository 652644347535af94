use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{Corpus, CorpusError, Label, Sample, Split};

const REQUIRED_KEYS: [&str; 4] = ["id", "text", "label", "split"];
const OPTIONAL_KEYS: [&str; 2] = ["generator", "domain"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject objects carrying keys outside the dataset schema.
    pub strict: bool,
}

/// Loads a dataset file. The corpus is named after the file stem.
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    opts: LoadOptions,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    match format {
        CorpusFormat::Jsonl => parse_corpus(name, BufReader::new(file), opts),
    }
}

/// Parses dataset JSONL from any reader. Blank lines are skipped.
pub fn parse_corpus(
    name: impl Into<String>,
    reader: impl BufRead,
    opts: LoadOptions,
) -> Result<Corpus, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_line(&line, line_no, opts)?;
        sample.validate().map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId { id: sample.id });
        }
        samples.push(sample);
    }
    Corpus::new(name, samples)
}

fn parse_line(line: &str, line_no: usize, opts: LoadOptions) -> Result<Sample, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: format!("invalid JSON: {e}"),
    })?;
    let Value::Object(obj) = value else {
        return Err(CorpusError::Parse {
            line: line_no,
            message: "record must be a JSON object".into(),
        });
    };
    if opts.strict {
        if let Some(key) = obj
            .keys()
            .find(|k| !REQUIRED_KEYS.contains(&k.as_str()) && !OPTIONAL_KEYS.contains(&k.as_str()))
        {
            return Err(CorpusError::UnknownKey {
                line: line_no,
                key: key.clone(),
            });
        }
    }

    let id = required_str(&obj, "id", line_no)?;
    let mut text = required_str(&obj, "text", line_no)?;
    strip_trailing_newlines(&mut text);
    let label_raw = required_str(&obj, "label", line_no)?;
    let label = Label::parse(&label_raw).ok_or(CorpusError::UnknownValue {
        line: line_no,
        field: "label",
        value: label_raw,
    })?;
    let split_raw = required_str(&obj, "split", line_no)?;
    let split = Split::parse(&split_raw).ok_or(CorpusError::UnknownValue {
        line: line_no,
        field: "split",
        value: split_raw,
    })?;

    Ok(Sample {
        id,
        text,
        label,
        generator: optional_str(&obj, "generator", line_no)?,
        domain: optional_str(&obj, "domain", line_no)?,
        split,
    })
}

fn required_str(obj: &Map<String, Value>, key: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CorpusError::Parse {
            line,
            message: format!("field '{key}' must be a string"),
        }),
        None => Err(CorpusError::Parse {
            line,
            message: format!("missing required field '{key}'"),
        }),
    }
}

fn optional_str(
    obj: &Map<String, Value>,
    key: &str,
    line: usize,
) -> Result<Option<String>, CorpusError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(CorpusError::Parse {
            line,
            message: format!("field '{key}' must be a string or null"),
        }),
    }
}

fn strip_trailing_newlines(text: &mut String) {
    while text.ends_with('\n') || text.ends_with('\r') {
        text.pop();
    }
}

/// Writes a corpus as dataset JSONL, one sample per line in corpus order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write_corpus(corpus, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_corpus(corpus: &Corpus, out: &mut impl Write) -> std::io::Result<()> {
    for sample in corpus {
        serde_json::to_writer(&mut *out, sample)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
