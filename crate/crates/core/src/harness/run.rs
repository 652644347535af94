//! Stage execution for one configured experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{CurationDecl, ExperimentConfig, LoadedConfig, ScorerDecl};
use super::eval::{evaluate_features, zero_shot_eval, BundleEntry, ScorerBundle};
use super::{read_json_file, write_json_file, HarnessError, OutputLock, RunManifest, StageError, VERSION};
use crate::corpus::{
    corpus_stats, load_corpus, remove_generators, save_corpus, substitute_generators, Corpus,
    CorpusFormat, CurationStep, LoadOptions, Sample, Split, StatsTable, SubstituteOptions, Substitution,
};
use crate::ensemble::{fit_ensemble, stack_features, EnsembleError, EnsembleModel, StackedFeatures, StackedRow};
use crate::metrics::{render_table, EvalReport, TableRow};
use crate::scorers::{
    load_prob_files, train_ngram_lr, train_perplexity_scorer, BuiltinScorer, ProbVector, Scorer, ScorerError,
};

/// Recorded in every report.
pub const VOTING_NOTE: &str = "soft voting: the verdict averages the probability vectors of logistic regression, \
random forest, gaussian naive bayes and linear svm with equal weight; exact ties are labeled human";

const CURATED: &str = "curated.jsonl";
const CURATE_META: &str = "curate.json";
const SCORER_DIR: &str = "scorers";
const BUNDLE: &str = "scorers.json";
const TRAIN_FEATURES: &str = "features/train.json";
const TEST_FEATURES: &str = "features/test.json";
const MODEL: &str = "model.json";
const REPORT_JSON: &str = "report.json";
const REPORT_TXT: &str = "report.txt";
const MANIFEST: &str = "manifest.json";
const STATE: &str = "stages.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsPair {
    pub raw: StatsTable,
    pub curated: StatsTable,
}

#[derive(Serialize, Deserialize)]
struct CurateMeta {
    name: String,
    provenance: Vec<CurationStep>,
    stats: StatsPair,
}

#[derive(Debug, Clone)]
pub struct Curated {
    pub corpus: Corpus,
    pub stats: StatsPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: EvalReport,
}

/// Everything a run reports. Contains no timings or absolute paths, so
/// identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub manifest: Vec<String>,
    pub voting: String,
    pub oof_folds: Option<usize>,
    pub provenance: Vec<CurationStep>,
    pub stats: StatsPair,
    pub train_n: usize,
    pub test: EvalReport,
    pub zero_shot: Vec<NamedReport>,
}

impl ExperimentReport {
    /// The test row first, then one row per zero-shot corpus.
    pub fn table_rows(&self) -> Vec<TableRow> {
        std::iter::once(TableRow::from_report(&self.name, &self.test))
            .chain(self.zero_shot.iter().map(|z| TableRow::from_report(&z.name, &z.report)))
            .collect()
    }

    pub fn render(&self) -> String {
        format!(
            "experiment: {}\nconfig: {}\nscorers: {}\ntrain rows: {}\n\n{}\n{}\n{}\n",
            self.name,
            self.config_fingerprint,
            self.manifest.join(", "),
            self.train_n,
            self.stats.curated.render(),
            render_table(&self.table_rows()),
            self.voting
        )
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }
}

/// Executes an experiment end to end and returns its report and manifest.
pub fn run_experiment(config: &LoadedConfig) -> Result<(ExperimentReport, RunManifest), HarnessError> {
    let mut run = Run::open(config)?;
    let report = run.evaluate()?;
    Ok((report, run.manifest().clone()))
}

/// An experiment bound to its output directory. Stages run on demand, each
/// pulling in the stages it depends on.
pub struct Run {
    cfg: ExperimentConfig,
    fingerprint: String,
    out: PathBuf,
    state: BTreeMap<String, String>,
    manifest: RunManifest,
    keys: BTreeMap<&'static str, String>,
    curated: Option<Curated>,
    scorers: Option<Vec<Arc<dyn Scorer>>>,
    features: Option<(StackedFeatures, StackedFeatures)>,
    model: Option<EnsembleModel>,
    _lock: OutputLock,
}

impl Run {
    pub fn open(config: &LoadedConfig) -> Result<Self, HarnessError> {
        let out = config.config.output_dir.clone();
        let lock = OutputLock::acquire(&out)?;
        let state_path = out.join(STATE);
        let state = if state_path.is_file() {
            read_json_file(&state_path).unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            cfg: config.config.clone(),
            fingerprint: config.fingerprint.clone(),
            manifest: RunManifest {
                config_fingerprint: config.fingerprint.clone(),
                version: VERSION.to_string(),
                ..Default::default()
            },
            out,
            state,
            keys: BTreeMap::new(),
            curated: None,
            scorers: None,
            features: None,
            model: None,
            _lock: lock,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn curate(&mut self) -> Result<&Curated, HarnessError> {
        if self.curated.is_none() {
            let start = Instant::now();
            let key = self.key("curate")?;
            let reuse = self.reusable("curate", &key, &[CURATED, CURATE_META]);
            let curated = if reuse {
                load_curated(&self.out)
            } else {
                compute_curated(&self.cfg, &self.out)
            }
            .map_err(HarnessError::stage("curate"))?;
            self.stage_done(
                "curate",
                Some(key),
                start,
                reuse,
                &[("curated_corpus", CURATED), ("curation", CURATE_META)],
            )?;
            self.curated = Some(curated);
        }
        Ok(self.curated.as_ref().expect("curated above"))
    }

    pub fn scorers(&mut self) -> Result<Vec<Arc<dyn Scorer>>, HarnessError> {
        if self.scorers.is_none() {
            let start = Instant::now();
            let key = self.key("train-scorer")?;
            let files = builtin_files(&self.cfg);
            let mut needed: Vec<&str> = files.iter().map(String::as_str).collect();
            needed.push(BUNDLE);
            let reuse = self.reusable("train-scorer", &key, &needed);
            let scorers = if reuse {
                ScorerBundle::load(self.out.join(BUNDLE))?.instantiate(&self.out, &self.file_scorer_paths())?
            } else {
                self.curate()?;
                let corpus = &self.curated.as_ref().expect("curated above").corpus;
                compute_scorers(&self.cfg, &self.out, corpus).map_err(HarnessError::stage("train-scorer"))?
            };
            let mut artifacts: Vec<(String, String)> = vec![("scorer_bundle".into(), BUNDLE.into())];
            for (decl, file) in self.cfg.scorers.iter().filter(|d| d.is_trainable()).zip(&files) {
                artifacts.push((format!("scorer:{}", decl.id()), file.clone()));
            }
            let refs: Vec<(&str, &str)> = artifacts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            self.stage_done("train-scorer", Some(key), start, reuse, &refs)?;
            self.scorers = Some(scorers);
        }
        Ok(self.scorers.clone().expect("scorers above"))
    }

    pub fn features(&mut self) -> Result<&(StackedFeatures, StackedFeatures), HarnessError> {
        if self.features.is_none() {
            let start = Instant::now();
            let key = self.key("score")?;
            let reuse = self.reusable("score", &key, &[TRAIN_FEATURES, TEST_FEATURES]);
            let pair = if reuse {
                load_features(&self.out, &self.cfg.scorer_ids())
            } else {
                let scorers = self.scorers()?;
                self.curate()?;
                let corpus = &self.curated.as_ref().expect("curated above").corpus;
                compute_features(&self.cfg, &self.out, corpus, &scorers)
            }
            .map_err(HarnessError::stage("score"))?;
            self.stage_done(
                "score",
                Some(key),
                start,
                reuse,
                &[("train_features", TRAIN_FEATURES), ("test_features", TEST_FEATURES)],
            )?;
            self.features = Some(pair);
        }
        Ok(self.features.as_ref().expect("features above"))
    }

    pub fn model(&mut self) -> Result<&EnsembleModel, HarnessError> {
        if self.model.is_none() {
            let start = Instant::now();
            let key = self.key("train-ensemble")?;
            let reuse = self.reusable("train-ensemble", &key, &[MODEL]);
            let model = if reuse {
                EnsembleModel::load(self.out.join(MODEL)).map_err(StageError::from)
            } else {
                let cfg = self.cfg.ensemble_config();
                let out = self.out.clone();
                let (train, _) = self.features()?;
                info!("fitting meta-learners on {} rows of width {}", train.len(), train.width());
                fit_ensemble(train, &cfg)
                    .and_then(|m| m.save(out.join(MODEL)).map(|_| m))
                    .map_err(StageError::from)
            }
            .map_err(HarnessError::stage("train-ensemble"))?;
            self.stage_done("train-ensemble", Some(key), start, reuse, &[("model", MODEL)])?;
            self.model = Some(model);
        }
        Ok(self.model.as_ref().expect("model above"))
    }

    /// Runs whatever is missing, then evaluates on the test split and every
    /// zero-shot corpus and writes the reports.
    pub fn evaluate(&mut self) -> Result<ExperimentReport, HarnessError> {
        self.model()?;
        self.features()?;
        self.curate()?;
        let scorers = if self.cfg.zero_shot.is_empty() {
            Vec::new()
        } else {
            self.scorers()?
        };
        let start = Instant::now();
        let report = self.build_report(&scorers)?;
        write_bytes(&self.out.join(REPORT_JSON), &report.to_json()).map_err(HarnessError::stage("evaluate"))?;
        write_bytes(&self.out.join(REPORT_TXT), report.render().as_bytes()).map_err(HarnessError::stage("evaluate"))?;
        self.stage_done(
            "evaluate",
            None,
            start,
            false,
            &[("report", REPORT_JSON), ("report_text", REPORT_TXT)],
        )?;
        Ok(report)
    }

    fn build_report(&self, scorers: &[Arc<dyn Scorer>]) -> Result<ExperimentReport, HarnessError> {
        let cfg = &self.cfg;
        let curated = self.curated.as_ref().expect("curated before evaluate");
        let (train, test) = self.features.as_ref().expect("features before evaluate");
        let model = self.model.as_ref().expect("model before evaluate");
        let samples: Vec<&Sample> = curated.corpus.split(Split::Test).collect();
        let mut test_report = evaluate_features(model, test, &samples, &cfg.category_fields)
            .map_err(HarnessError::stage("evaluate"))?;
        test_report.config_fingerprint = Some(self.fingerprint.clone());

        let mut zero_shot = Vec::new();
        for z in &cfg.zero_shot {
            let corpus = load_corpus_file(&z.path, cfg.corpus.strict).map_err(HarnessError::stage("zero-shot"))?;
            let mut own: Vec<Arc<dyn Scorer>> = Vec::with_capacity(scorers.len());
            for (decl, scorer) in cfg.scorers.iter().zip(scorers) {
                own.push(match decl {
                    ScorerDecl::File { id, .. } => Arc::new(
                        load_prob_files(&z.prob_files[id], id)
                            .map_err(|e| HarnessError::Stage {
                                stage: "zero-shot",
                                source: e.into(),
                            })?,
                    ),
                    _ => scorer.clone(),
                });
            }
            let refs: Vec<&dyn Scorer> = own.iter().map(|s| s.as_ref()).collect();
            let mut report = zero_shot_eval(model, &corpus, &refs, &cfg.category_fields)?;
            report.config_fingerprint = Some(self.fingerprint.clone());
            zero_shot.push(NamedReport {
                name: z.name.clone(),
                report,
            });
        }

        Ok(ExperimentReport {
            name: cfg.name.clone(),
            config_fingerprint: self.fingerprint.clone(),
            seed: cfg.seed,
            manifest: model.manifest.clone(),
            voting: VOTING_NOTE.to_string(),
            oof_folds: cfg.oof_folds,
            provenance: curated.corpus.provenance().to_vec(),
            stats: curated.stats.clone(),
            train_n: train.len(),
            test: test_report,
            zero_shot,
        })
    }

    fn file_scorer_paths(&self) -> BTreeMap<String, Vec<PathBuf>> {
        self.cfg
            .scorers
            .iter()
            .filter_map(|d| match d {
                ScorerDecl::File { id, paths } => Some((id.clone(), paths.clone())),
                _ => None,
            })
            .collect()
    }

    /// Key over everything a stage's artifacts depend on, chained through the
    /// stages before it.
    fn key(&mut self, stage: &'static str) -> Result<String, HarnessError> {
        if let Some(k) = self.keys.get(stage) {
            return Ok(k.clone());
        }
        let cfg = &self.cfg;
        let mut parts: Vec<Vec<u8>> = vec![stage.as_bytes().to_vec(), VERSION.as_bytes().to_vec()];
        match stage {
            "curate" => {
                parts.push(cfg.name.as_bytes().to_vec());
                parts.push(json(&cfg.corpus));
                parts.push(json(&cfg.curation));
                for path in curation_inputs(cfg) {
                    parts.push(file_digest(path)?);
                }
            }
            "train-scorer" => {
                parts.push(self.key("curate")?.into_bytes());
                let cfg = &self.cfg;
                parts.push(json(&cfg.scorers));
                parts.push(cfg.seed.to_le_bytes().to_vec());
                for paths in self.file_scorer_paths().values() {
                    for path in paths {
                        parts.push(file_digest(path)?);
                    }
                }
            }
            "score" => {
                parts.push(self.key("train-scorer")?.into_bytes());
                parts.push(json(&self.cfg.oof_folds));
            }
            "train-ensemble" => {
                parts.push(self.key("score")?.into_bytes());
                parts.push(json(&self.cfg.ensemble));
                parts.push(self.cfg.seed.to_le_bytes().to_vec());
            }
            other => unreachable!("no key for stage {other}"),
        }
        let mut h = Sha256::new();
        for p in &parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let key = hex::encode(h.finalize());
        self.keys.insert(stage, key.clone());
        Ok(key)
    }

    fn reusable(&self, stage: &str, key: &str, files: &[&str]) -> bool {
        self.state.get(stage).map(String::as_str) == Some(key) && files.iter().all(|f| self.out.join(f).is_file())
    }

    fn stage_done(
        &mut self,
        stage: &'static str,
        key: Option<String>,
        start: Instant,
        reused: bool,
        artifacts: &[(&str, &str)],
    ) -> Result<(), HarnessError> {
        let ms = start.elapsed().as_millis() as u64;
        info!("{stage}: {} in {ms} ms", if reused { "reused" } else { "done" });
        self.manifest.timings_ms.insert(stage.to_string(), ms);
        if reused {
            self.manifest.reused.push(stage.to_string());
        }
        for (name, rel) in artifacts {
            self.manifest.artifacts.insert(name.to_string(), PathBuf::from(rel));
        }
        if let Some(key) = key {
            self.state.insert(stage.to_string(), key);
            write_json_file(&self.out.join(STATE), &self.state).map_err(HarnessError::stage(stage))?;
        }
        write_json_file(&self.out.join(MANIFEST), &self.manifest).map_err(HarnessError::stage(stage))
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("config serialization cannot fail")
}

fn curation_inputs(cfg: &ExperimentConfig) -> Vec<&Path> {
    let mut out: Vec<&Path> = cfg.corpus.paths.iter().map(PathBuf::as_path).collect();
    for step in &cfg.curation {
        if let CurationDecl::Substitute { substitutions, .. } = step {
            out.extend(substitutions.iter().map(|s| s.replacement.as_path()));
        }
    }
    out
}

fn file_digest(path: &Path) -> Result<Vec<u8>, HarnessError> {
    let bytes = fs::read(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).to_vec())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), StageError> {
    fs::write(path, bytes).map_err(|source| StageError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_corpus_file(path: &Path, strict: bool) -> Result<Corpus, StageError> {
    load_corpus(path, CorpusFormat::Jsonl, LoadOptions { strict }).map_err(|source| StageError::CorpusFile {
        path: path.display().to_string(),
        source,
    })
}

fn compute_curated(cfg: &ExperimentConfig, out: &Path) -> Result<Curated, StageError> {
    let parts = cfg
        .corpus
        .paths
        .iter()
        .map(|p| load_corpus_file(p, cfg.corpus.strict))
        .collect::<Result<Vec<_>, _>>()?;
    let raw = Corpus::concat(cfg.name.clone(), &parts)?;
    let raw_stats = corpus_stats(&raw);
    let mut corpus = raw;
    for step in &cfg.curation {
        corpus = match step {
            CurationDecl::Remove {
                generators,
                splits,
                strict,
            } => {
                let gens: BTreeSet<String> = generators.iter().cloned().collect();
                let splits: BTreeSet<Split> = splits.iter().copied().collect();
                remove_generators(&corpus, &gens, &splits, *strict)?
            }
            CurationDecl::Substitute {
                substitutions,
                allow_count_mismatch,
            } => {
                let subs = substitutions
                    .iter()
                    .map(|s| {
                        Ok(Substitution {
                            generators: s.generators.iter().cloned().collect(),
                            replacement: load_corpus_file(&s.replacement, cfg.corpus.strict)?,
                        })
                    })
                    .collect::<Result<Vec<_>, StageError>>()?;
                let opts = SubstituteOptions {
                    allow_count_mismatch: *allow_count_mismatch,
                };
                substitute_generators(&corpus, &subs, opts)?
            }
        };
    }
    let stats = StatsPair {
        raw: raw_stats,
        curated: corpus_stats(&corpus),
    };
    save_corpus(&corpus, out.join(CURATED))?;
    write_json_file(
        &out.join(CURATE_META),
        &CurateMeta {
            name: corpus.name.clone(),
            provenance: corpus.provenance().to_vec(),
            stats: stats.clone(),
        },
    )?;
    Ok(Curated { corpus, stats })
}

fn load_curated(out: &Path) -> Result<Curated, StageError> {
    let meta: CurateMeta = read_json_file(&out.join(CURATE_META))?;
    let loaded = load_corpus_file(&out.join(CURATED), true)?;
    let corpus = Corpus::with_provenance(meta.name, loaded.samples().to_vec(), meta.provenance)?;
    Ok(Curated {
        corpus,
        stats: meta.stats,
    })
}

/// Relative paths of the trained-scorer files, in declaration order.
fn builtin_files(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.scorers
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_trainable())
        .map(|(i, d)| {
            let safe: String = d
                .id()
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
                .collect();
            format!("{SCORER_DIR}/{i:02}-{safe}.json")
        })
        .collect()
}

/// Trains a built-in scorer on the train split of `corpus`; `None` for
/// scorers that are not trained here.
fn train_builtin(decl: &ScorerDecl, corpus: &Corpus, seed: u64) -> Result<Option<BuiltinScorer>, ScorerError> {
    Ok(match decl {
        ScorerDecl::NgramLr { id, params } => {
            let mut params = params.clone();
            params.seed = params.seed.wrapping_add(seed);
            Some(BuiltinScorer::NgramLr(train_ngram_lr(id.clone(), corpus, &params)?))
        }
        ScorerDecl::Perplexity { id, params } => {
            Some(BuiltinScorer::Perplexity(train_perplexity_scorer(id.clone(), corpus, params)?))
        }
        ScorerDecl::File { .. } | ScorerDecl::Remote { .. } => None,
    })
}

fn compute_scorers(cfg: &ExperimentConfig, out: &Path, corpus: &Corpus) -> Result<Vec<Arc<dyn Scorer>>, StageError> {
    let files = builtin_files(cfg);
    let mut files = files.iter();
    let mut scorers: Vec<Arc<dyn Scorer>> = Vec::new();
    let mut entries = Vec::new();
    for decl in &cfg.scorers {
        match decl {
            ScorerDecl::NgramLr { id, .. } | ScorerDecl::Perplexity { id, .. } => {
                info!("training scorer '{id}'");
                let trained = train_builtin(decl, corpus, cfg.seed)?.expect("trainable");
                let file = files.next().expect("one file per trainable scorer");
                let path = out.join(file);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|source| StageError::Io {
                        path: parent.display().to_string(),
                        source,
                    })?;
                }
                trained.save(&path)?;
                entries.push(BundleEntry::Builtin {
                    id: id.clone(),
                    file: PathBuf::from(file),
                });
                scorers.push(Arc::new(trained));
            }
            ScorerDecl::File { id, paths } => {
                scorers.push(Arc::new(load_prob_files(paths, id)?));
                entries.push(BundleEntry::File { id: id.clone() });
            }
            ScorerDecl::Remote { id, params } => {
                scorers.push(Arc::new(crate::scorers::RemoteScorer::new(id.clone(), params.clone())?));
                entries.push(BundleEntry::Remote {
                    id: id.clone(),
                    params: params.clone(),
                });
            }
        }
    }
    ScorerBundle { scorers: entries }.save(out.join(BUNDLE))?;
    Ok(scorers)
}

fn load_features(out: &Path, ids: &[String]) -> Result<(StackedFeatures, StackedFeatures), StageError> {
    let train = StackedFeatures::load(out.join(TRAIN_FEATURES))?;
    let test = StackedFeatures::load(out.join(TEST_FEATURES))?;
    if train.manifest != ids || test.manifest != ids {
        return Err(StageError::Artifact("stored features were built with other scorers".into()));
    }
    Ok((train, test))
}

fn compute_features(
    cfg: &ExperimentConfig,
    out: &Path,
    corpus: &Corpus,
    scorers: &[Arc<dyn Scorer>],
) -> Result<(StackedFeatures, StackedFeatures), StageError> {
    let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s.as_ref()).collect();
    let train = match cfg.oof_folds {
        None => stack_features(corpus, &refs, Split::Train)?,
        Some(k) => out_of_fold_features(cfg, corpus, &refs, k)?,
    };
    let test = stack_features(corpus, &refs, Split::Test)?;
    fs::create_dir_all(out.join("features")).map_err(|source| StageError::Io {
        path: out.join("features").display().to_string(),
        source,
    })?;
    train.save(out.join(TRAIN_FEATURES))?;
    test.save(out.join(TEST_FEATURES))?;
    Ok((train, test))
}

/// Train rows where every trainable scorer's column comes from a copy trained
/// without the row's fold. Folds are a seeded shuffle dealt round-robin.
fn out_of_fold_features(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    scorers: &[&dyn Scorer],
    k: usize,
) -> Result<StackedFeatures, StageError> {
    let train: Vec<&Sample> = corpus.split(Split::Train).collect();
    let n = train.len();
    if n == 0 {
        return Err(EnsembleError::EmptySplit(Split::Train).into());
    }
    if n < k {
        return Err(StageError::Artifact(format!(
            "oof_folds is {k} but the train split has only {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut fold = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    let ids: Vec<&str> = train.iter().map(|s| s.id.as_str()).collect();

    let mut columns: Vec<Vec<ProbVector>> = Vec::with_capacity(scorers.len());
    for (decl, scorer) in cfg.scorers.iter().zip(scorers) {
        let scoring = |source: ScorerError| EnsembleError::Scoring {
            scorer: scorer.id().to_string(),
            source,
        };
        if !decl.is_trainable() {
            let missing = scorer.missing_ids(&ids);
            if !missing.is_empty() {
                return Err(EnsembleError::Coverage {
                    scorer: scorer.id().to_string(),
                    missing,
                }
                .into());
            }
            columns.push(scorer.score_samples(&train).map_err(scoring)?);
            continue;
        }
        let mut column = vec![ProbVector::uniform(); n];
        for f in 0..k {
            let rest: Vec<Sample> = (0..n).filter(|&i| fold[i] != f).map(|i| train[i].clone()).collect();
            let rest = Corpus::new(format!("{}-fold{f}", corpus.name), rest)?;
            info!("training scorer '{}' for fold {}/{k}", scorer.id(), f + 1);
            let fitted = train_builtin(decl, &rest, cfg.seed)?.expect("trainable");
            let held: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let held_samples: Vec<&Sample> = held.iter().map(|&i| train[i]).collect();
            let probs = fitted.score_samples(&held_samples).map_err(scoring)?;
            for (i, p) in held.into_iter().zip(probs) {
                column[i] = p;
            }
        }
        columns.push(column);
    }

    let rows = train
        .iter()
        .enumerate()
        .map(|(i, s)| StackedRow {
            id: s.id.clone(),
            label: s.label,
            features: columns.iter().flat_map(|c| c[i].to_array()).collect(),
        })
        .collect();
    Ok(StackedFeatures {
        manifest: scorers.iter().map(|s| s.id().to_string()).collect(),
        rows,
    })
}
