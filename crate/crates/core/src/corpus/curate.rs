use std::collections::BTreeSet;

use log::warn;

use super::{Corpus, CorpusError, CurationStep, Label, Sample, Split, HUMAN_GENERATOR};

fn check_generators(generators: &BTreeSet<String>) -> Result<(), CorpusError> {
    if generators.is_empty() {
        return Err(CorpusError::Curation("generator set is empty".into()));
    }
    if generators.contains(HUMAN_GENERATOR) {
        return Err(CorpusError::Curation(
            "the 'human' generator cannot be removed or substituted".into(),
        ));
    }
    Ok(())
}

fn matches(sample: &Sample, generators: &BTreeSet<String>, splits: &BTreeSet<Split>) -> bool {
    splits.contains(&sample.split) && generators.contains(sample.generator_key())
}

/// Drops every sample in `splits` whose generator is in `generators`.
///
/// With `strict`, each generator must match at least one sample.
pub fn remove_generators(
    corpus: &Corpus,
    generators: &BTreeSet<String>,
    splits: &BTreeSet<Split>,
    strict: bool,
) -> Result<Corpus, CorpusError> {
    check_generators(generators)?;
    if strict {
        let unmatched: Vec<String> = generators
            .iter()
            .filter(|g| {
                !corpus
                    .iter()
                    .any(|s| splits.contains(&s.split) && s.generator_key() == g.as_str())
            })
            .cloned()
            .collect();
        if !unmatched.is_empty() {
            return Err(CorpusError::NoMatch {
                generators: unmatched,
                splits: splits.iter().copied().collect(),
            });
        }
    }

    let kept: Vec<Sample> = corpus
        .iter()
        .filter(|s| !matches(s, generators, splits))
        .cloned()
        .collect();
    let removed = corpus.len() - kept.len();
    let mut provenance = corpus.provenance.clone();
    provenance.push(CurationStep::RemoveGenerators {
        generators: generators.iter().cloned().collect(),
        splits: splits.iter().copied().collect(),
        removed,
    });
    Ok(Corpus {
        name: corpus.name.clone(),
        samples: kept,
        provenance,
    })
}

/// Replaces the train samples of `generators` with the samples of `replacement`.
#[derive(Debug, Clone)]
pub struct Substitution {
    pub generators: BTreeSet<String>,
    pub replacement: Corpus,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SubstituteOptions {
    /// Permit a replacement whose size differs from the number of removed samples.
    pub allow_count_mismatch: bool,
}

/// Applies each substitution in order.
///
/// Replacement samples take over the positions of the removed samples, in
/// order; any surplus is appended at the end of the corpus. Replacement ids
/// are prefixed with `"<replacement name>:"`.
pub fn substitute_generators(
    corpus: &Corpus,
    substitutions: &[Substitution],
    opts: SubstituteOptions,
) -> Result<Corpus, CorpusError> {
    let train: BTreeSet<Split> = [Split::Train].into();
    let mut samples = corpus.samples.clone();
    let mut provenance = corpus.provenance.clone();

    for sub in substitutions {
        check_generators(&sub.generators)?;
        let repl = &sub.replacement;
        for s in repl {
            if s.label != Label::Ai {
                return Err(CorpusError::ReplacementViolation {
                    replacement: repl.name.clone(),
                    id: s.id.clone(),
                    what: "human-labeled",
                });
            }
            if s.split != Split::Train {
                return Err(CorpusError::ReplacementViolation {
                    replacement: repl.name.clone(),
                    id: s.id.clone(),
                    what: "in the test split",
                });
            }
        }

        let positions: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| matches(s, &sub.generators, &train))
            .map(|(i, _)| i)
            .collect();
        if positions.len() != repl.len() {
            if opts.allow_count_mismatch {
                warn!(
                    "replacement '{}' has {} samples for {} removed; train size will change",
                    repl.name,
                    repl.len(),
                    positions.len()
                );
            } else {
                return Err(CorpusError::CountMismatch {
                    replacement: repl.name.clone(),
                    expected: positions.len(),
                    provided: repl.len(),
                });
            }
        }

        let mut incoming = repl.iter().map(|s| Sample {
            id: format!("{}:{}", repl.name, s.id),
            generator: Some(s.generator.clone().unwrap_or_else(|| repl.name.clone())),
            split: Split::Train,
            ..s.clone()
        });
        let mut next: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
        for &pos in &positions {
            next[pos] = incoming.next();
        }
        samples = next.into_iter().flatten().chain(incoming).collect();

        provenance.push(CurationStep::SubstituteGenerators {
            generators: sub.generators.iter().cloned().collect(),
            replacement: repl.name.clone(),
            removed: positions.len(),
            inserted: repl.len(),
        });
    }

    Corpus::with_provenance(corpus.name.clone(), samples, provenance)
}
