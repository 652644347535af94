//! Token n-gram language model with add-k smoothing, and a detector that maps
//! per-token log-perplexity to `p_ai` through a fitted logistic curve.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_text, ProbVector, Scorer, ScorerError};
use crate::corpus::{Corpus, Label, Split};
use crate::math::Logistic1d;

const UNK: u32 = 0;
const BOS: u32 = 1;
const EOS: u32 = 2;
const FIRST_WORD: u32 = 3;
const P_AI_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerplexityConfig {
    pub order: usize,
    pub k: f64,
}

impl Default for PerplexityConfig {
    fn default() -> Self {
        Self { order: 3, k: 0.5 }
    }
}

type Counts = HashMap<Vec<u32>, u64>;

/// Order-n token model: `P(w | h) = (c(h, w) + k) / (c(h) + k * V)`, where `V`
/// counts every word type, `<unk>` and `</s>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LmRepr", from = "LmRepr")]
pub struct NgramLm {
    order: usize,
    k: f64,
    vocab: BTreeMap<String, u32>,
    ngrams: Counts,
    histories: Counts,
}

#[derive(Serialize, Deserialize)]
struct LmRepr {
    order: usize,
    k: f64,
    vocab: BTreeMap<String, u32>,
    ngrams: Vec<(Vec<u32>, u64)>,
}

impl From<NgramLm> for LmRepr {
    fn from(lm: NgramLm) -> Self {
        let mut ngrams: Vec<_> = lm.ngrams.into_iter().collect();
        ngrams.sort();
        Self {
            order: lm.order,
            k: lm.k,
            vocab: lm.vocab,
            ngrams,
        }
    }
}

impl From<LmRepr> for NgramLm {
    fn from(r: LmRepr) -> Self {
        let mut lm = NgramLm {
            order: r.order,
            k: r.k,
            vocab: r.vocab,
            ngrams: HashMap::new(),
            histories: HashMap::new(),
        };
        for (gram, count) in r.ngrams {
            *lm.histories.entry(gram[..gram.len() - 1].to_vec()).or_default() += count;
            lm.ngrams.insert(gram, count);
        }
        lm
    }
}

impl NgramLm {
    pub fn train<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        cfg: &PerplexityConfig,
    ) -> Result<Self, ScorerError> {
        if cfg.order == 0 {
            return Err(ScorerError::InvalidConfig("order must be at least 1".into()));
        }
        if !(cfg.k > 0.0) || !cfg.k.is_finite() {
            return Err(ScorerError::InvalidConfig(format!("k must be > 0, got {}", cfg.k)));
        }
        let texts: Vec<&str> = texts.into_iter().collect();
        let mut vocab = BTreeMap::new();
        for text in &texts {
            for tok in text.split_whitespace() {
                let next = FIRST_WORD + vocab.len() as u32;
                vocab.entry(tok.to_string()).or_insert(next);
            }
        }
        let mut lm = Self {
            order: cfg.order,
            k: cfg.k,
            vocab,
            ngrams: HashMap::new(),
            histories: HashMap::new(),
        };
        for text in &texts {
            for (gram, count) in lm.sequence_counts(text) {
                *lm.histories.entry(gram[..gram.len() - 1].to_vec()).or_default() += count;
                *lm.ngrams.entry(gram).or_default() += count;
            }
        }
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the predicted-token alphabet used in the smoothing denominator.
    pub fn alphabet_size(&self) -> usize {
        self.vocab.len() + 2
    }

    fn token_ids(&self, text: &str) -> Vec<u32> {
        let mut ids = vec![BOS; self.order - 1];
        ids.extend(
            text.split_whitespace()
                .map(|t| self.vocab.get(t).copied().unwrap_or(UNK)),
        );
        ids.push(EOS);
        ids
    }

    fn sequence_counts(&self, text: &str) -> Counts {
        let ids = self.token_ids(text);
        let mut counts = Counts::new();
        for gram in ids.windows(self.order) {
            *counts.entry(gram.to_vec()).or_default() += 1;
        }
        counts
    }

    /// Total natural-log probability of `text` (including `</s>`) and the
    /// number of predicted tokens. `exclude` holds counts to subtract, which
    /// gives leave-one-out estimates for texts that were part of training.
    fn log_prob_excluding(&self, text: &str, exclude: Option<&Counts>) -> (f64, usize) {
        let ids = self.token_ids(text);
        let v = self.alphabet_size() as f64;
        let mut total = 0.0;
        let mut n = 0;
        for gram in ids.windows(self.order) {
            let history = &gram[..gram.len() - 1];
            let mut c = self.ngrams.get(gram).copied().unwrap_or(0);
            let mut h = self.histories.get(history).copied().unwrap_or(0);
            if let Some(ex) = exclude {
                let own = ex.get(gram).copied().unwrap_or(0);
                let own_h: u64 = ex
                    .iter()
                    .filter(|(g, _)| &g[..g.len() - 1] == history)
                    .map(|(_, c)| *c)
                    .sum();
                c -= own.min(c);
                h -= own_h.min(h);
            }
            total += ((c as f64 + self.k) / (h as f64 + self.k * v)).ln();
            n += 1;
        }
        (total, n)
    }

    pub fn log_prob(&self, text: &str) -> f64 {
        self.log_prob_excluding(text, None).0
    }

    /// Per-token negative log-likelihood, i.e. the log of perplexity.
    pub fn log_perplexity(&self, text: &str) -> f64 {
        let (lp, n) = self.log_prob_excluding(text, None);
        -lp / n as f64
    }

    /// Log-perplexity of a text as if its own counts had not been in training.
    pub fn log_perplexity_held_out(&self, text: &str) -> f64 {
        let own = self.sequence_counts(text);
        let (lp, n) = self.log_prob_excluding(text, Some(&own));
        -lp / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScorer {
    pub id: String,
    pub lm: NgramLm,
    pub calibration: Logistic1d,
    /// Digests of the texts the language model was trained on.
    #[serde(default)]
    pub memorized: BTreeSet<u64>,
}

/// First eight bytes of the SHA-256 of `text`.
pub fn text_digest(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

impl PerplexityScorer {
    /// Log-perplexity of `text`, leave-one-out when it was a training text.
    pub fn log_perplexity(&self, text: &str) -> f64 {
        if self.memorized.contains(&text_digest(text)) {
            self.lm.log_perplexity_held_out(text)
        } else {
            self.lm.log_perplexity(text)
        }
    }

    pub fn p_ai_for_log_perplexity(&self, log_ppl: f64) -> f64 {
        self.calibration
            .prob(log_ppl)
            .clamp(P_AI_MARGIN, 1.0 - P_AI_MARGIN)
    }
}

impl Scorer for PerplexityScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<ProbVector, ScorerError> {
        check_text(text)?;
        Ok(ProbVector::from_p_ai(
            self.p_ai_for_log_perplexity(self.log_perplexity(text)),
        ))
    }
}

/// Builds the language model from human-authored train text and calibrates
/// log-perplexity against train labels.
///
/// Human train texts are measured leave-one-out, here and whenever the
/// scorer meets them again, since the model has memorized them and would
/// otherwise look far less perplexed by them than by any unseen human text.
pub fn train_perplexity_scorer(
    id: impl Into<String>,
    train: &Corpus,
    cfg: &PerplexityConfig,
) -> Result<PerplexityScorer, ScorerError> {
    let samples: Vec<_> = train.split(Split::Train).collect();
    let human: Vec<&str> = samples
        .iter()
        .filter(|s| s.label == Label::Human)
        .map(|s| s.text.as_str())
        .collect();
    if human.is_empty() {
        return Err(ScorerError::NoHumanSamples);
    }
    let memorized = human.iter().map(|t| text_digest(t)).collect();
    let mut scorer = PerplexityScorer {
        id: id.into(),
        lm: NgramLm::train(human, cfg)?,
        calibration: Logistic1d { a: 0.0, b: 0.0 },
        memorized,
    };
    let xs: Vec<f64> = samples.iter().map(|s| scorer.log_perplexity(&s.text)).collect();
    let positive: Vec<bool> = samples.iter().map(|s| s.label == Label::Ai).collect();
    scorer.calibration = Logistic1d::fit(&xs, &positive);
    Ok(scorer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    #[test]
    fn repeated_sentence_is_most_likely_stream() {
        let cfg = PerplexityConfig::default();
        let lm = NgramLm::train(std::iter::repeat_n("a b c", 5), &cfg).unwrap();
        let words = ["a", "b", "c"];
        let target = lm.log_prob("a b c");
        let mut best = f64::NEG_INFINITY;
        for x in words {
            for y in words {
                for z in words {
                    let s = format!("{x} {y} {z}");
                    let lp = lm.log_prob(&s);
                    if s != "a b c" {
                        assert!(lp < target, "{s} scored {lp} >= {target}");
                    }
                    best = best.max(lp);
                }
            }
        }
        assert_eq!(best, target);
    }

    #[test]
    fn conditional_distribution_sums_to_one() {
        let lm = NgramLm::train(["x y z", "x y y", "z z"], &PerplexityConfig::default()).unwrap();
        // P(w | <s> x) over the alphabet {unk, </s>, x, y, z}
        let v = lm.alphabet_size() as f64;
        let hist = vec![BOS, lm.vocab["x"]];
        let h = lm.histories.get(&hist).copied().unwrap_or(0) as f64;
        let mut total = 0.0;
        for w in [UNK, EOS].into_iter().chain(lm.vocab.values().copied()) {
            let mut g = hist.clone();
            g.push(w);
            let c = lm.ngrams.get(&g).copied().unwrap_or(0) as f64;
            total += (c + lm.k) / (h + lm.k * v);
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_must_be_positive() {
        let cfg = PerplexityConfig { order: 3, k: 0.0 };
        assert!(matches!(
            NgramLm::train(["a"], &cfg),
            Err(ScorerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn requires_human_samples() {
        let c = Corpus::new("ai", vec![Sample::new("a", "x y", Label::Ai, Split::Train)]).unwrap();
        assert!(matches!(
            train_perplexity_scorer("p", &c, &PerplexityConfig::default()),
            Err(ScorerError::NoHumanSamples)
        ));
    }

    #[test]
    fn held_out_matches_retraining_without_the_text() {
        let cfg = PerplexityConfig::default();
        let texts = ["one two three", "two three four", "one two four"];
        let full = NgramLm::train(texts, &cfg).unwrap();
        let without = NgramLm::train(texts[1..].iter().copied(), &cfg).unwrap();
        // Same alphabet: every token of texts[0] also occurs elsewhere.
        assert_eq!(full.alphabet_size(), without.alphabet_size());
        let a = full.log_perplexity_held_out(texts[0]);
        let b = without.log_perplexity(texts[0]);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let s = PerplexityScorer {
            id: "p".into(),
            lm: NgramLm::train(["a b"], &PerplexityConfig::default()).unwrap(),
            calibration: Logistic1d { a: 1e6, b: 0.0 },
            memorized: BTreeSet::new(),
        };
        let p = s.score("zzz qqq").unwrap();
        assert!(p.p_ai() > 0.0 && p.p_ai() < 1.0);
    }

    #[test]
    fn training_texts_are_scored_held_out() {
        let samples = ["one two three", "two three four", "one two four"]
            .iter()
            .enumerate()
            .map(|(i, t)| Sample::new(format!("h{i}"), *t, Label::Human, Split::Train))
            .chain([Sample::new("a", "four four one", Label::Ai, Split::Train)])
            .collect();
        let c = Corpus::new("c", samples).unwrap();
        let s = train_perplexity_scorer("p", &c, &PerplexityConfig::default()).unwrap();
        assert_eq!(s.log_perplexity("one two three"), s.lm.log_perplexity_held_out("one two three"));
        assert!(s.log_perplexity("one two three") > s.lm.log_perplexity("one two three"));
        assert_eq!(s.log_perplexity("three two one"), s.lm.log_perplexity("three two one"));
    }
}
