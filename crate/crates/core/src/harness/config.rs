//! Experiment configuration: one JSON document, optionally patched by
//! `key.path=value` overrides.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::corpus::Split;
use crate::ensemble::{EnsembleConfig, ForestConfig, LrConfig, SvmConfig};
use crate::metrics::CategoryField;
use crate::scorers::{NgramLrConfig, PerplexityConfig, RemoteConfig};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "STACKDETECT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub corpus: CorpusDecl,
    #[serde(default)]
    pub curation: Vec<CurationDecl>,
    pub scorers: Vec<ScorerDecl>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    /// Out-of-fold stacking for trainable scorers.
    #[serde(default)]
    pub oof_folds: Option<usize>,
    #[serde(default)]
    pub zero_shot: Vec<ZeroShotDecl>,
    #[serde(default = "default_category_fields")]
    pub category_fields: Vec<CategoryField>,
}

fn default_category_fields() -> Vec<CategoryField> {
    vec![CategoryField::Generator, CategoryField::Domain]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusDecl {
    /// Dataset files, concatenated in order.
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurationDecl {
    Remove {
        generators: Vec<String>,
        #[serde(default = "train_only")]
        splits: Vec<Split>,
        #[serde(default)]
        strict: bool,
    },
    Substitute {
        substitutions: Vec<SubstitutionDecl>,
        #[serde(default)]
        allow_count_mismatch: bool,
    },
}

fn train_only() -> Vec<Split> {
    vec![Split::Train]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstitutionDecl {
    pub generators: Vec<String>,
    pub replacement: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerDecl {
    NgramLr {
        id: String,
        #[serde(default)]
        params: NgramLrConfig,
    },
    Perplexity {
        id: String,
        #[serde(default)]
        params: PerplexityConfig,
    },
    /// Precomputed probabilities; every path is merged into one table.
    File { id: String, paths: Vec<PathBuf> },
    Remote { id: String, params: RemoteConfig },
}

impl ScorerDecl {
    pub fn id(&self) -> &str {
        match self {
            ScorerDecl::NgramLr { id, .. }
            | ScorerDecl::Perplexity { id, .. }
            | ScorerDecl::File { id, .. }
            | ScorerDecl::Remote { id, .. } => id,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, ScorerDecl::NgramLr { .. } | ScorerDecl::Perplexity { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroShotDecl {
    pub name: String,
    pub path: PathBuf,
    /// Probability files for file scorers, by scorer id.
    #[serde(default)]
    pub prob_files: std::collections::BTreeMap<String, Vec<PathBuf>>,
}

/// Meta-learner settings. The seed comes from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub lr: LrConfig,
    pub rf: ForestConfig,
    pub svm: SvmConfig,
    pub gnb_eps: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let d = EnsembleConfig::default();
        Self {
            lr: d.lr,
            rf: d.rf,
            svm: d.svm,
            gnb_eps: d.gnb_eps,
        }
    }
}

impl ExperimentConfig {
    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            seed: self.seed,
            lr: self.ensemble.lr.clone(),
            rf: self.ensemble.rf.clone(),
            svm: self.ensemble.svm.clone(),
            gnb_eps: self.ensemble.gnb_eps,
        }
    }

    pub fn scorer_ids(&self) -> Vec<String> {
        self.scorers.iter().map(|s| s.id().to_string()).collect()
    }

    /// Rewrites every relative path against `base`.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        self.corpus.paths.iter_mut().for_each(fix);
        for step in &mut self.curation {
            if let CurationDecl::Substitute { substitutions, .. } = step {
                substitutions.iter_mut().for_each(|s| fix(&mut s.replacement));
            }
        }
        for s in &mut self.scorers {
            if let ScorerDecl::File { paths, .. } = s {
                paths.iter_mut().for_each(fix);
            }
        }
        for z in &mut self.zero_shot {
            fix(&mut z.path);
            z.prob_files.values_mut().flatten().for_each(fix);
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::Validation(m));
        if self.name.trim().is_empty() {
            return invalid("name must not be empty".into());
        }
        if self.corpus.paths.is_empty() {
            return invalid("corpus.paths must list at least one file".into());
        }
        if self.scorers.is_empty() {
            return invalid("at least one scorer is required".into());
        }
        let mut ids = HashSet::new();
        for s in &self.scorers {
            if s.id().trim().is_empty() {
                return invalid("scorer ids must not be empty".into());
            }
            if !ids.insert(s.id()) {
                return invalid(format!("scorer id '{}' is declared twice", s.id()));
            }
            match s {
                ScorerDecl::File { id, paths } if paths.is_empty() => {
                    return invalid(format!("file scorer '{id}' lists no probability files"));
                }
                ScorerDecl::Remote { id, params } if params.endpoint.is_empty() => {
                    return invalid(format!("remote scorer '{id}' has no endpoint"));
                }
                ScorerDecl::Perplexity { id, params } if params.order == 0 || !(params.k > 0.0) => {
                    return invalid(format!("perplexity scorer '{id}' needs order >= 1 and k > 0"));
                }
                _ => {}
            }
        }
        if let Some(k) = self.oof_folds {
            if k < 2 {
                return invalid(format!("oof_folds must be at least 2, got {k}"));
            }
        }
        if self.ensemble.rf.n_trees == 0 {
            return invalid("ensemble.rf.n_trees must be at least 1".into());
        }
        let mut names = HashSet::new();
        for z in &self.zero_shot {
            if !names.insert(z.name.as_str()) {
                return invalid(format!("zero-shot corpus '{}' is declared twice", z.name));
            }
            for id in z.prob_files.keys() {
                if !ids.contains(id.as_str()) {
                    return invalid(format!("zero-shot '{}' gives probabilities for unknown scorer '{id}'", z.name));
                }
            }
            for s in &self.scorers {
                if let ScorerDecl::File { id, .. } = s {
                    if !z.prob_files.contains_key(id) {
                        return invalid(format!(
                            "zero-shot '{}' needs prob_files for file scorer '{id}'",
                            z.name
                        ));
                    }
                }
            }
        }
        for step in &self.curation {
            match step {
                CurationDecl::Remove { generators, splits, .. } => {
                    if generators.is_empty() || splits.is_empty() {
                        return invalid("remove needs generators and splits".into());
                    }
                }
                CurationDecl::Substitute { substitutions, .. } => {
                    if substitutions.iter().any(|s| s.generators.is_empty()) {
                        return invalid("every substitution needs at least one generator".into());
                    }
                }
            }
        }
        for path in self.input_files() {
            if !path.is_file() {
                return invalid(format!("referenced file {} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Every input file the experiment reads.
    pub fn input_files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = self.corpus.paths.iter().map(PathBuf::as_path).collect();
        for step in &self.curation {
            if let CurationDecl::Substitute { substitutions, .. } = step {
                out.extend(substitutions.iter().map(|s| s.replacement.as_path()));
            }
        }
        for s in &self.scorers {
            if let ScorerDecl::File { paths, .. } = s {
                out.extend(paths.iter().map(PathBuf::as_path));
            }
        }
        for z in &self.zero_shot {
            out.push(&z.path);
            out.extend(z.prob_files.values().flatten().map(PathBuf::as_path));
        }
        out
    }
}

/// A parsed, validated configuration and the fingerprint of what produced it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Hex SHA-256 over the config bytes and any overrides.
    pub fingerprint: String,
    pub path: PathBuf,
}

/// Reads, patches and validates a config file.
///
/// Overrides are `dotted.key=value`; the value is parsed as JSON when it
/// parses, else taken as a string.
pub fn load_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<LoadedConfig, HarnessError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&bytes, &base, overrides).map(|(config, fingerprint)| LoadedConfig {
        config,
        fingerprint,
        path: path.to_path_buf(),
    })
}

/// Parses config bytes; relative paths resolve against `base`.
pub fn parse_config(
    bytes: &[u8],
    base: &Path,
    overrides: &[String],
) -> Result<(ExperimentConfig, String), HarnessError> {
    let mut value: Value = serde_json::from_slice(bytes)
        .map_err(|e| HarnessError::Validation(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| HarnessError::Validation(format!("config: {e}")))?;
    config.resolve_paths(base);
    config.validate()?;
    Ok((config, fingerprint(bytes, overrides)))
}

/// Content hash of the config bytes plus overrides. With no overrides this is
/// the plain SHA-256 of the bytes.
pub fn fingerprint(bytes: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    for o in overrides {
        h.update([0u8]);
        h.update(o.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), HarnessError> {
    let bad = |m: &str| HarnessError::Validation(format!("override '{spec}': {m}"));
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad("array segments must be indices"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| bad(&format!("index {idx} out of range ({len} items)")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad(&format!("'{part}' is not inside an object or array"))),
        };
    }
    Ok(())
}

/// Reads [`SEED_ENV`] as an override, if set.
pub fn seed_override_from_env() -> Result<Option<String>, HarnessError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed: u64 = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Validation(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
            Ok(Some(format!("seed={seed}")))
        }
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "name": "t",
            "seed": 1,
            "output_dir": "out",
            "corpus": {"paths": ["data.jsonl"]},
            "scorers": [{"kind": "ngram_lr", "id": "ng"}]
        })
    }

    fn with_data(v: &Value) -> (tempfile::TempDir, Vec<u8>) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("data.jsonl"), "").unwrap();
        (dir, serde_json::to_vec(v).unwrap())
    }

    #[test]
    fn parses_minimal_config_and_resolves_paths() {
        let (dir, bytes) = with_data(&minimal());
        let (cfg, fp) = parse_config(&bytes, dir.path(), &[]).unwrap();
        assert_eq!(cfg.corpus.paths[0], dir.path().join("data.jsonl"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.ensemble_config().seed, 1);
        assert_eq!(fp, hex::encode(Sha256::digest(&bytes)));
    }

    #[test]
    fn missing_probability_file_fails_validation() {
        let mut v = minimal();
        v["scorers"] = json!([{"kind": "file", "id": "rob", "paths": ["nope.jsonl"]}]);
        let (dir, bytes) = with_data(&v);
        let err = parse_config(&bytes, dir.path(), &[]).unwrap_err();
        assert!(matches!(err, HarnessError::Validation(ref m) if m.contains("nope.jsonl")), "{err}");
    }

    #[test]
    fn duplicate_scorer_ids_and_unknown_keys_rejected() {
        let mut v = minimal();
        v["scorers"] = json!([{"kind": "ngram_lr", "id": "a"}, {"kind": "perplexity", "id": "a"}]);
        let (dir, bytes) = with_data(&v);
        assert!(parse_config(&bytes, dir.path(), &[]).is_err());

        let mut v = minimal();
        v["sed"] = json!(3);
        let (dir, bytes) = with_data(&v);
        assert!(parse_config(&bytes, dir.path(), &[]).is_err());

        let mut v = minimal();
        v["scorers"][0]["params"] = json!({"epochz": 3});
        let (dir, bytes) = with_data(&v);
        assert!(parse_config(&bytes, dir.path(), &[]).is_err());
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let mut v = minimal();
        apply_override(&mut v, "seed=9").unwrap();
        apply_override(&mut v, "ensemble.rf.n_trees=5").unwrap();
        apply_override(&mut v, "scorers.0.id=other").unwrap();
        apply_override(&mut v, "name=plain text").unwrap();
        assert_eq!(v["seed"], 9);
        assert_eq!(v["ensemble"]["rf"]["n_trees"], 5);
        assert_eq!(v["scorers"][0]["id"], "other");
        assert_eq!(v["name"], "plain text");
        assert!(apply_override(&mut v, "scorers.7.id=x").is_err());
        assert!(apply_override(&mut v, "seed").is_err());
        assert!(apply_override(&mut v, "seed.x=1").is_err());
    }

    #[test]
    fn fingerprint_tracks_bytes_and_overrides() {
        let a = fingerprint(b"{}", &[]);
        assert_eq!(a, fingerprint(b"{}", &[]));
        assert_ne!(a, fingerprint(b"{ }", &[]));
        assert_ne!(a, fingerprint(b"{}", &["seed=1".into()]));
        assert_ne!(
            fingerprint(b"{}", &["a=1".into(), "b=2".into()]),
            fingerprint(b"{}", &["a=1b=2".into()])
        );
    }

    #[test]
    fn zero_shot_needs_probabilities_for_file_scorers() {
        let mut v = minimal();
        v["scorers"] = json!([{"kind": "file", "id": "rob", "paths": ["data.jsonl"]}]);
        v["zero_shot"] = json!([{"name": "ew", "path": "data.jsonl"}]);
        let (dir, bytes) = with_data(&v);
        let err = parse_config(&bytes, dir.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("prob_files"), "{err}");
    }
}
