//! Logistic regression over tf-idf weighted, hashed character and word n-grams.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_text, ProbVector, Scorer, ScorerError};
use crate::corpus::{Corpus, Label, Split};
use crate::math::{sigmoid, softplus};

const CHAR_ORDERS: std::ops::RangeInclusive<usize> = 2..=4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramLrConfig {
    /// Cap on the number of distinct hashed features kept (most frequent first).
    pub max_features: usize,
    /// Hash space size.
    pub hash_buckets: usize,
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for NgramLrConfig {
    fn default() -> Self {
        Self {
            max_features: 50_000,
            hash_buckets: 1 << 18,
            l2: 1e-4,
            lr: 2.0,
            epochs: 300,
            init_scale: 1e-3,
            seed: 0,
        }
    }
}

impl NgramLrConfig {
    fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::InvalidConfig(m.to_string()));
        if self.max_features == 0 || self.hash_buckets == 0 || self.epochs == 0 {
            return bad("max_features, hash_buckets and epochs must be positive");
        }
        if self.hash_buckets > u32::MAX as usize {
            return bad("hash_buckets must fit in 32 bits");
        }
        if !(self.lr > 0.0) || !(self.l2 > 0.0) || !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return bad("lr and l2 must be positive, init_scale non-negative");
        }
        Ok(())
    }
}

/// Sparse feature vector: `(feature index, value)` sorted by index.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramLrScorer {
    pub id: String,
    pub hash_buckets: usize,
    /// Sorted hash buckets retained as features; position = feature index.
    pub vocabulary: Vec<u32>,
    pub idf: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn fnv1a(kind: u8, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in std::iter::once(&kind).chain(bytes) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Raw hashed n-gram counts: character n-grams of orders 2-4 and word unigrams.
fn bucket_counts(text: &str, buckets: usize) -> BTreeMap<u32, u32> {
    let mut counts = BTreeMap::new();
    let mut bump = |h: u64| *counts.entry((h % buckets as u64) as u32).or_insert(0) += 1;
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = boundaries.len() - 1;
    for order in CHAR_ORDERS {
        for start in 0..n_chars.saturating_sub(order - 1) {
            let gram = &text[boundaries[start]..boundaries[start + order]];
            bump(fnv1a(order as u8, gram.as_bytes()));
        }
    }
    for word in text.split_whitespace() {
        bump(fnv1a(b'w', word.as_bytes()));
    }
    counts
}

impl NgramLrScorer {
    /// An untrained scorer with all-zero weights over the given buckets.
    pub fn zeroed(id: impl Into<String>, hash_buckets: usize, vocabulary: Vec<u32>) -> Self {
        let n = vocabulary.len();
        Self {
            id: id.into(),
            hash_buckets,
            vocabulary,
            idf: vec![1.0; n],
            weights: vec![0.0; n],
            bias: 0.0,
        }
    }

    /// L2-normalized tf-idf vector with sublinear term frequency.
    pub fn featurize(&self, text: &str) -> SparseVec {
        let mut v: SparseVec = bucket_counts(text, self.hash_buckets)
            .into_iter()
            .filter_map(|(bucket, count)| {
                let idx = self.vocabulary.binary_search(&bucket).ok()?;
                Some((idx as u32, (1.0 + (count as f64).ln()) * self.idf[idx]))
            })
            .collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in &mut v {
                *x /= norm;
            }
        }
        v
    }

    pub fn logit(&self, features: &SparseVec) -> f64 {
        sparse_dot(&self.weights, features) + self.bias
    }
}

impl Scorer for NgramLrScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<ProbVector, ScorerError> {
        check_text(text)?;
        Ok(ProbVector::from_p_ai(sigmoid(self.logit(&self.featurize(text)))))
    }
}

fn sparse_dot(weights: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, v)| weights[i as usize] * v).sum()
}

/// Mean logistic loss plus `l2/2 * ||w||^2` over sparse rows, with gradient.
/// Returns `(loss, grad_w, grad_b)`.
pub fn sparse_logistic_loss_grad(
    rows: &[SparseVec],
    targets: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &t) in rows.iter().zip(targets) {
        let z = sparse_dot(weights, row) + bias;
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for &(i, v) in row {
            grad[i as usize] += r * v;
        }
        grad_b += r;
    }
    let reg = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + reg, grad, grad_b / n)
}

/// Trains on the train split of `train`. Deterministic for a fixed `cfg.seed`.
pub fn train_ngram_lr(
    id: impl Into<String>,
    train: &Corpus,
    cfg: &NgramLrConfig,
) -> Result<NgramLrScorer, ScorerError> {
    cfg.validate()?;
    let docs: Vec<_> = train.split(Split::Train).collect();
    for (label, name) in [(Label::Human, "human"), (Label::Ai, "ai")] {
        if !docs.iter().any(|s| s.label == label) {
            return Err(ScorerError::SingleClass { missing: name });
        }
    }

    let counts: Vec<BTreeMap<u32, u32>> = docs
        .iter()
        .map(|s| bucket_counts(&s.text, cfg.hash_buckets))
        .collect();
    let mut df: HashMap<u32, usize> = HashMap::new();
    for c in &counts {
        for &bucket in c.keys() {
            *df.entry(bucket).or_default() += 1;
        }
    }
    let mut ranked: Vec<(u32, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_features);
    ranked.sort_by_key(|&(bucket, _)| bucket);

    let n_docs = docs.len() as f64;
    let vocabulary: Vec<u32> = ranked.iter().map(|&(b, _)| b).collect();
    let idf: Vec<f64> = ranked
        .iter()
        .map(|&(_, d)| ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<f64> = (0..vocabulary.len())
        .map(|_| {
            if cfg.init_scale > 0.0 {
                rng.random_range(-cfg.init_scale..=cfg.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    let mut model = NgramLrScorer {
        id: id.into(),
        hash_buckets: cfg.hash_buckets,
        vocabulary,
        idf,
        weights,
        bias: 0.0,
    };

    let rows: Vec<SparseVec> = docs.iter().map(|s| model.featurize(&s.text)).collect();
    let targets: Vec<f64> = docs.iter().map(|s| s.label.indicator()).collect();
    for _ in 0..cfg.epochs {
        let (_, grad, grad_b) =
            sparse_logistic_loss_grad(&rows, &targets, &model.weights, model.bias, cfg.l2);
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= cfg.lr * g;
        }
        model.bias -= cfg.lr * grad_b;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    #[test]
    fn zero_weights_give_uniform() {
        let s = NgramLrScorer::zeroed("z", 1024, (0..1024).collect());
        let p = s.score("anything at all").unwrap();
        assert_eq!(p.to_array(), [0.5, 0.5]);
    }

    #[test]
    fn featurize_is_unit_norm_and_sorted() {
        let s = NgramLrScorer::zeroed("z", 4096, (0..4096).collect());
        let v = s.featurize("héllo wörld ☃");
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(v.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn opposite_labels_same_text_is_even() {
        let c = Corpus::new(
            "tie",
            vec![
                Sample::new("h", "the very same text", Label::Human, Split::Train),
                Sample::new("a", "the very same text", Label::Ai, Split::Train),
            ],
        )
        .unwrap();
        let s = train_ngram_lr("tie", &c, &NgramLrConfig::default()).unwrap();
        let p = s.score("the very same text").unwrap();
        assert!((p.p_human() - 0.5).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn single_class_rejected() {
        let c = Corpus::new("h", vec![Sample::new("h", "text", Label::Human, Split::Train)]).unwrap();
        assert!(matches!(
            train_ngram_lr("x", &c, &NgramLrConfig::default()),
            Err(ScorerError::SingleClass { missing: "ai" })
        ));
    }

    #[test]
    fn vocabulary_capped() {
        let c = Corpus::new(
            "cap",
            vec![
                Sample::new("h", "alpha beta gamma", Label::Human, Split::Train),
                Sample::new("a", "delta epsilon", Label::Ai, Split::Train),
            ],
        )
        .unwrap();
        let cfg = NgramLrConfig {
            max_features: 7,
            ..Default::default()
        };
        let s = train_ngram_lr("cap", &c, &cfg).unwrap();
        assert_eq!(s.vocabulary.len(), 7);
        assert_eq!(s.weights.len(), 7);
        assert_eq!(s.idf.len(), 7);
    }

    #[test]
    fn empty_text_rejected() {
        let s = NgramLrScorer::zeroed("z", 16, vec![]);
        assert!(matches!(s.score("  \n"), Err(ScorerError::EmptyText)));
    }
}
