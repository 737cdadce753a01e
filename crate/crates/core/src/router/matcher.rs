//! Nearest-prompt matching under cosine similarity.

use std::collections::BTreeMap;

use super::{Intent, PromptCorpus, RouterError};

/// Returns the intent of the nearest corpus prompt and its similarity.
pub trait SemanticMatcher: Send + Sync {
    fn match_intent(&self, text: &str) -> Result<(Intent, f64), RouterError>;
}

/// Lower-cases, maps runs of digits and `#` to a single `#`, and collapses
/// everything else that is not a letter into single spaces.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    let mut in_digits = false;
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_digit() || ch == '#' {
            if !in_digits {
                out.push('#');
                in_digits = true;
                last_space = false;
            }
            continue;
        }
        in_digits = false;
        if ch.is_alphabetic() {
            out.push(ch);
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    out.trim_end().to_string()
}

/// Character n-grams (3 to 5) of the space-padded normalized text.
fn char_ngrams(text: &str) -> BTreeMap<String, f64> {
    let padded: Vec<char> = format!(" {} ", normalize(text)).chars().collect();
    let mut counts = BTreeMap::new();
    for n in 3..=5 {
        if padded.len() < n {
            continue;
        }
        for w in padded.windows(n) {
            *counts.entry(w.iter().collect::<String>()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

type SparseVec = Vec<(String, f64)>;

fn cosine(a: &BTreeMap<String, f64>, b: &SparseVec) -> f64 {
    b.iter().map(|(k, v)| a.get(k).map_or(0.0, |x| x * v)).sum()
}

/// Character 3–5-gram TF-IDF vectors with smoothed IDF fitted on the corpus.
/// N-grams never seen in the corpus get the maximum IDF so that they still
/// count towards the query norm.
pub struct TfidfMatcher {
    idf: BTreeMap<String, f64>,
    unseen_idf: f64,
    entries: Vec<(SparseVec, Intent)>,
}

impl TfidfMatcher {
    pub fn fit(corpus: &PromptCorpus) -> Self {
        let docs: Vec<BTreeMap<String, f64>> = corpus.entries().iter().map(|e| char_ngrams(&e.text)).collect();
        let n = docs.len() as f64;
        let mut df: BTreeMap<&str, f64> = BTreeMap::new();
        for doc in &docs {
            for k in doc.keys() {
                *df.entry(k.as_str()).or_insert(0.0) += 1.0;
            }
        }
        let idf: BTreeMap<String, f64> = df
            .iter()
            .map(|(k, &f)| (k.to_string(), ((1.0 + n) / (1.0 + f)).ln() + 1.0))
            .collect();
        let unseen_idf = (1.0 + n).ln() + 1.0;
        let mut matcher = Self {
            idf,
            unseen_idf,
            entries: Vec::new(),
        };
        matcher.entries = corpus
            .entries()
            .iter()
            .map(|e| {
                let mut v: SparseVec = matcher.weigh(&e.text).into_iter().collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                (v, e.intent)
            })
            .collect();
        matcher
    }

    fn weigh(&self, text: &str) -> BTreeMap<String, f64> {
        let mut v = char_ngrams(text);
        for (k, w) in v.iter_mut() {
            *w *= self.idf.get(k).copied().unwrap_or(self.unseen_idf);
        }
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for w in v.values_mut() {
                *w /= norm;
            }
        }
        v
    }

    /// Similarity to every corpus entry, in corpus order.
    pub fn similarities(&self, text: &str) -> Vec<f64> {
        let q = self.weigh(text);
        self.entries.iter().map(|(v, _)| clamp_unit(cosine(&q, v))).collect()
    }
}

/// Rounds away the last few ulps so identical texts score exactly 1.
fn clamp_unit(s: f64) -> f64 {
    if s > 1.0 - 1e-12 {
        1.0
    } else {
        s.max(0.0)
    }
}

fn nearest(sims: &[f64], intents: impl Fn(usize) -> Intent) -> (Intent, f64) {
    // Earliest entry wins ties.
    let (best, sim) = sims
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bs), (i, &s)| if s > bs { (i, s) } else { (bi, bs) });
    (intents(best), sim)
}

impl SemanticMatcher for TfidfMatcher {
    fn match_intent(&self, text: &str) -> Result<(Intent, f64), RouterError> {
        if normalize(text).is_empty() {
            return Err(RouterError::EmptyText);
        }
        if self.entries.is_empty() {
            return Err(RouterError::EmptyCorpus);
        }
        let sims = self.similarities(text);
        Ok(nearest(&sims, |i| self.entries[i].1))
    }
}

/// Dense sentence embeddings from an external model.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Nearest-prompt matcher over embeddings from an [`EmbeddingProvider`].
pub struct EmbeddingMatcher<P> {
    provider: P,
    entries: Vec<(Vec<f64>, Intent)>,
}

impl<P: EmbeddingProvider> EmbeddingMatcher<P> {
    pub fn new(provider: P, corpus: &PromptCorpus) -> Self {
        let entries = corpus
            .entries()
            .iter()
            .map(|e| (unit(provider.embed(&e.text)), e.intent))
            .collect();
        Self { provider, entries }
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

impl<P: EmbeddingProvider> SemanticMatcher for EmbeddingMatcher<P> {
    fn match_intent(&self, text: &str) -> Result<(Intent, f64), RouterError> {
        if text.trim().is_empty() {
            return Err(RouterError::EmptyText);
        }
        if self.entries.is_empty() {
            return Err(RouterError::EmptyCorpus);
        }
        let q = unit(self.provider.embed(text));
        let sims: Vec<f64> = self
            .entries
            .iter()
            .map(|(v, _)| clamp_unit(v.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        Ok(nearest(&sims, |i| self.entries[i].1))
    }
}
