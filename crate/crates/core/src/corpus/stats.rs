use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Split};

/// Sample counts per (split, label) and per (split, generator).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsTable {
    pub total: usize,
    pub by_label: BTreeMap<Split, BTreeMap<Label, usize>>,
    pub by_generator: BTreeMap<Split, BTreeMap<String, usize>>,
}

impl StatsTable {
    pub fn count(&self, split: Split, label: Label) -> usize {
        self.by_label[&split][&label]
    }

    pub fn generator_count(&self, split: Split, generator: &str) -> usize {
        self.by_generator[&split].get(generator).copied().unwrap_or(0)
    }

    pub fn split_total(&self, split: Split) -> usize {
        self.by_label[&split].values().sum()
    }

    /// Plain-text rendering: a split × label table followed by a generator × split table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10} {:>10}", "split", "human", "ai");
        for split in Split::ALL {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10}",
                split.as_str(),
                self.count(split, Label::Human),
                self.count(split, Label::Ai)
            );
        }
        out.push('\n');
        let mut generators: Vec<&String> = self.by_generator.values().flat_map(|m| m.keys()).collect();
        generators.sort();
        generators.dedup();
        let width = generators.iter().map(|g| g.len()).max().unwrap_or(0).max(9);
        let _ = writeln!(out, "{:<width$} {:>10} {:>10}", "generator", "train", "test");
        for g in generators {
            let _ = writeln!(
                out,
                "{:<width$} {:>10} {:>10}",
                g,
                self.generator_count(Split::Train, g),
                self.generator_count(Split::Test, g)
            );
        }
        let _ = writeln!(out, "\ntotal {}", self.total);
        out
    }
}

pub fn corpus_stats(corpus: &Corpus) -> StatsTable {
    let mut by_label: BTreeMap<Split, BTreeMap<Label, usize>> = Split::ALL
        .iter()
        .map(|&s| (s, Label::ALL.iter().map(|&l| (l, 0)).collect()))
        .collect();
    let mut by_generator: BTreeMap<Split, BTreeMap<String, usize>> =
        Split::ALL.iter().map(|&s| (s, BTreeMap::new())).collect();
    for s in corpus {
        *by_label.entry(s.split).or_default().entry(s.label).or_default() += 1;
        *by_generator
            .entry(s.split)
            .or_default()
            .entry(s.generator_key().to_string())
            .or_default() += 1;
    }
    StatsTable {
        total: corpus.len(),
        by_label,
        by_generator,
    }
}
