//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use stackdetect::corpus::{save_corpus, Corpus, Label, Sample, Split};
use stackdetect::scorers::{save_prob_file, FileScorer, ProbVector};

/// Train and test counts per generator, AuText layout.
pub const AUTEXT_COUNTS: [(&str, usize, usize); 7] = [
    ("human", 17_046, 10_642),
    ("bloom-1b7", 2_750, 1_704),
    ("bloom-3b", 2_705, 1_782),
    ("bloom-7b1", 2_808, 1_831),
    ("babbage", 2_834, 1_960),
    ("curie", 2_843, 1_958),
    ("text-davinci-003", 2_859, 1_955),
];

pub const GPT: [&str; 3] = ["babbage", "curie", "text-davinci-003"];

/// A corpus with exactly the AuText counts. Texts are placeholders.
pub fn autext_corpus() -> Corpus {
    let mut samples = Vec::new();
    for (split, pick) in [(Split::Train, 0), (Split::Test, 1)] {
        for (generator, train, test) in AUTEXT_COUNTS {
            let n = if pick == 0 { train } else { test };
            let label = if generator == "human" { Label::Human } else { Label::Ai };
            for i in 0..n {
                let id = format!("{}-{generator}-{i}", split.as_str());
                samples.push(Sample::new(id, format!("text {i}"), label, split).with_generator(generator));
            }
        }
    }
    Corpus::new("autext", samples).unwrap()
}

/// `n` ai-labeled train samples attributed to `name`.
pub fn replacement_corpus(name: &str, n: usize) -> Corpus {
    let samples = (0..n)
        .map(|i| Sample::new(format!("r{i}"), format!("replacement {i}"), Label::Ai, Split::Train).with_generator(name))
        .collect();
    Corpus::new(name, samples).unwrap()
}

const COMMON: [&str; 48] = [
    "the", "a", "of", "to", "and", "in", "is", "it", "that", "for", "on", "with", "as", "was", "at", "by", "this",
    "from", "people", "time", "year", "day", "city", "water", "house", "road", "market", "school", "story",
    "night", "morning", "price", "team", "game", "book", "music", "friend", "family", "work", "street", "car",
    "phone", "dinner", "window", "garden", "river", "train", "letter",
];
const AI_MARKERS: [&str; 8] = [
    "moreover", "furthermore", "delve", "tapestry", "pivotal", "multifaceted", "notably", "seamless",
];
const HUMAN_MARKERS: [&str; 8] = ["lol", "gonna", "kinda", "honestly", "yeah", "dunno", "wanna", "tbh"];

/// Alternating human and ai samples with a planted lexical signal: ai texts
/// lean on one marker vocabulary, human texts on another, each with noise.
/// Every fifth sample is in the test split.
pub fn planted_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains = ["news", "reviews", "wiki"];
    let samples = (0..n)
        .map(|i| {
            let ai = i % 2 == 1;
            let len = rng.random_range(15..30);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let r: f64 = rng.random();
                    let (own, other) = if ai { (&AI_MARKERS, &HUMAN_MARKERS) } else { (&HUMAN_MARKERS, &AI_MARKERS) };
                    if r < 0.20 {
                        own[rng.random_range(0..own.len())]
                    } else if r < 0.23 {
                        other[rng.random_range(0..other.len())]
                    } else {
                        COMMON[rng.random_range(0..COMMON.len())]
                    }
                })
                .collect();
            let split = if i % 5 == 4 { Split::Test } else { Split::Train };
            let (label, generator) = if ai {
                (Label::Ai, if i % 4 == 1 { "gen-a" } else { "gen-b" })
            } else {
                (Label::Human, "human")
            };
            Sample::new(format!("p{i}"), words.join(" "), label, split)
                .with_generator(generator)
                .with_domain(domains[i % 3])
        })
        .collect();
    Corpus::new("planted", samples).unwrap()
}

/// Probabilities that are right with probability `accuracy`, for every sample.
pub fn noisy_prob_scorer(corpus: &Corpus, id: &str, accuracy: f64, seed: u64) -> FileScorer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = corpus
        .iter()
        .map(|s| {
            let confident: f64 = rng.random_range(0.55..0.95);
            let right = rng.random::<f64>() < accuracy;
            let p_true = if right { confident } else { 1.0 - confident };
            let p_ai = if s.label == Label::Ai { p_true } else { 1.0 - p_true };
            (s.id.clone(), ProbVector::from_p_ai(p_ai))
        })
        .collect();
    FileScorer::new(id, table)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) {
    save_corpus(corpus, path).unwrap();
}

pub fn write_probs(scorer: &FileScorer, path: &Path) {
    save_prob_file(scorer, path).unwrap();
}

/// Config for the two built-in scorers over `data.jsonl` in the config's directory.
pub fn builtin_config(name: &str, seed: u64) -> Value {
    json!({
        "name": name,
        "seed": seed,
        "output_dir": "out",
        "corpus": {"paths": ["data.jsonl"]},
        "scorers": [
            {"kind": "ngram_lr", "id": "ngram"},
            {"kind": "perplexity", "id": "perplexity"}
        ],
        "ensemble": {"rf": {"n_trees": 25}}
    })
}

pub fn write_config(dir: &Path, config: &Value) -> std::path::PathBuf {
    let path = dir.join("experiment.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}
