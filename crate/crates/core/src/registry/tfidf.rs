//! Lexical TF-IDF vectors and cosine scoring.

use std::collections::BTreeMap;

/// Sparse term-weight vector. Ordered so that float accumulation is
/// reproducible regardless of how the catalog was ingested.
pub type TermVector = BTreeMap<String, f64>;

/// Lowercases, drops apostrophes and splits on anything that is not
/// alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn term_counts<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_owned()).or_insert(0.0) += 1.0;
    }
    counts
}

/// Smoothed inverse document frequency.
pub fn idf(total_docs: usize, doc_freq: usize) -> f64 {
    ((total_docs as f64 + 1.0) / (doc_freq as f64 + 1.0)).ln() + 1.0
}

pub fn weigh(counts: &BTreeMap<String, f64>, idf_of: impl Fn(&str) -> f64) -> TermVector {
    counts
        .iter()
        .map(|(term, tf)| (term.clone(), tf * idf_of(term)))
        .collect()
}

pub fn norm(v: &TermVector) -> f64 {
    v.values().map(|w| w * w).sum::<f64>().sqrt()
}

/// Cosine similarity clamped to `[0, 1]`; zero when either side is empty.
pub fn cosine(a: &TermVector, b: &TermVector) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(t, w)| large.get(t).map(|w2| w * w2))
        .sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}
