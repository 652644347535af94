use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stackdetect::corpus::{corpus_stats, load_corpus, CorpusError, CorpusFormat, LoadOptions};
use stackdetect::harness::{
    detect, load_config, load_model, seed_override_from_env, zero_shot_eval, HarnessError, LoadedConfig, Run,
    ScorerBundle,
};
use stackdetect::metrics::{render_table, CategoryField, TableRow};
use stackdetect::scorers::Scorer;

#[derive(Parser)]
#[command(name = "stackdetect", version, about = "Stacked-ensemble detection of machine-generated text")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print split/label and generator counts of a dataset file.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        json: bool,
    },
    /// Load and curate the configured corpora.
    Curate(ConfigArgs),
    /// Train the configured built-in scorers.
    TrainScorer(ConfigArgs),
    /// Build stacked features for the train and test splits.
    Score(ConfigArgs),
    /// Fit the meta-learners.
    TrainEnsemble(ConfigArgs),
    /// Run whatever is missing, evaluate and print the results table.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the full JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a saved model on a whole corpus without refitting.
    ZeroShot {
        model: PathBuf,
        corpus: PathBuf,
        #[command(flatten)]
        scorers: ScorerArgs,
        /// Row label in the printed table; defaults to the corpus file stem.
        #[arg(long)]
        name: Option<String>,
        /// Category fields to break accuracy down by.
        #[arg(long = "category-field", value_enum)]
        category_fields: Vec<FieldArg>,
        #[arg(long)]
        strict: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Classify one text given with --text, or read from stdin.
    Detect {
        model: PathBuf,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// `-` for stdin (the default when --text is absent).
        input: Option<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Override a config key, e.g. `--set ensemble.rf.n_trees=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Stack out-of-fold scorer outputs over K folds; same as `--set oof_folds=K`.
    #[arg(long, value_name = "K")]
    oof: Option<usize>,
}

#[derive(Args)]
struct ScorerArgs {
    /// Scorer bundle; defaults to scorers.json next to the model.
    #[arg(long)]
    scorers: Option<PathBuf>,
    /// Probability file for a file scorer, as ID=PATH. Repeatable.
    #[arg(long = "prob", value_name = "ID=PATH")]
    prob: Vec<String>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FieldArg {
    Domain,
    Generator,
}

impl From<FieldArg> for CategoryField {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Domain => CategoryField::Domain,
            FieldArg::Generator => CategoryField::Generator,
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let msg = error_chain(&e);
        if e.is_validation() {
            Failure::Validation(msg)
        } else {
            Failure::Runtime(msg)
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        let part = s.to_string();
        if !msg.contains(&part) {
            msg.push_str(": ");
            msg.push_str(&part);
        }
        cur = s.source();
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn open_config(args: &ConfigArgs) -> Result<LoadedConfig, Failure> {
    let mut overrides = args.overrides.clone();
    if let Some(k) = args.oof {
        overrides.push(format!("oof_folds={k}"));
    }
    if let Some(seed) = seed_override_from_env()? {
        overrides.push(seed);
    }
    Ok(load_config(&args.config, &overrides)?)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Stats { corpus, strict, json } => {
            let c = load_corpus(&corpus, CorpusFormat::Jsonl, LoadOptions { strict })?;
            let stats = corpus_stats(&c);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
            } else {
                print!("{}", stats.render());
            }
        }
        Command::Curate(args) => {
            let cfg = open_config(&args)?;
            let mut run = Run::open(&cfg)?;
            let curated = run.curate()?;
            print!("{}", curated.stats.curated.render());
        }
        Command::TrainScorer(args) => {
            let cfg = open_config(&args)?;
            let mut run = Run::open(&cfg)?;
            for s in run.scorers()? {
                println!("{}", s.id());
            }
        }
        Command::Score(args) => {
            let cfg = open_config(&args)?;
            let mut run = Run::open(&cfg)?;
            let (train, test) = run.features()?;
            println!(
                "stacked {} train and {} test rows of width {}",
                train.len(),
                test.len(),
                train.width()
            );
        }
        Command::TrainEnsemble(args) => {
            let cfg = open_config(&args)?;
            let mut run = Run::open(&cfg)?;
            let model = run.model()?;
            println!("fitted meta-learners over scorers {}", model.manifest.join(", "));
        }
        Command::Evaluate { config, json } => {
            let cfg = open_config(&config)?;
            let mut run = Run::open(&cfg)?;
            let report = run.evaluate()?;
            if json {
                print!("{}", String::from_utf8(report.to_json()).expect("json is utf-8"));
            } else {
                print!("{}", render_table(&report.table_rows()));
            }
        }
        Command::ZeroShot {
            model,
            corpus,
            scorers,
            name,
            category_fields,
            strict,
            report,
        } => {
            let m = load_model(&model)?;
            let built = build_scorers(&model, &scorers)?;
            let refs: Vec<&dyn Scorer> = built.iter().map(|s| s.as_ref()).collect();
            let c = load_corpus(&corpus, CorpusFormat::Jsonl, LoadOptions { strict })?;
            let fields: Vec<CategoryField> = if category_fields.is_empty() {
                vec![CategoryField::Generator, CategoryField::Domain]
            } else {
                category_fields.into_iter().map(Into::into).collect()
            };
            let r = zero_shot_eval(&m, &c, &refs, &fields)?;
            if let Some(path) = report {
                let mut bytes = serde_json::to_vec_pretty(&r).expect("report serialize");
                bytes.push(b'\n');
                std::fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            let label = name.unwrap_or_else(|| c.name.clone());
            print!("{}", render_table(&[TableRow::from_report(label, &r)]));
        }
        Command::Detect {
            model,
            scorers,
            text,
            input,
        } => {
            let m = load_model(&model)?;
            let built = build_scorers(&model, &scorers)?;
            let refs: Vec<&dyn Scorer> = built.iter().map(|s| s.as_ref()).collect();
            let text = match (text, input.as_deref()) {
                (Some(t), _) => t,
                (None, None | Some("-")) => {
                    let mut buf = String::new();
                    std::io::stdin()
                        .read_to_string(&mut buf)
                        .map_err(|e| Failure::Validation(format!("reading stdin: {e}")))?;
                    buf
                }
                (None, Some(other)) => {
                    return Err(Failure::Validation(format!(
                        "unexpected argument '{other}'; pass text with --text or '-' for stdin"
                    )))
                }
            };
            let verdict = detect(&m, &refs, &text)?;
            println!("{}", serde_json::to_string(&verdict).expect("verdict serialize"));
        }
    }
    Ok(())
}

fn build_scorers(
    model: &Path,
    args: &ScorerArgs,
) -> Result<Vec<std::sync::Arc<dyn Scorer>>, Failure> {
    let bundle_path = args
        .scorers
        .clone()
        .unwrap_or_else(|| model.parent().unwrap_or(Path::new(".")).join("scorers.json"));
    let bundle = ScorerBundle::load(&bundle_path)?;
    let mut prob_files: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for spec in &args.prob {
        let (id, path) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Validation(format!("--prob expects ID=PATH, got '{spec}'")))?;
        prob_files.entry(id.to_string()).or_default().push(PathBuf::from(path));
    }
    let base = bundle_path.parent().unwrap_or(Path::new("."));
    Ok(bundle.instantiate(base, &prob_files)?)
}
