//! Okapi BM25 over a growing document collection.

use std::collections::HashMap;

use super::embed::word_tokens;

pub const K1: f64 = 1.5;
pub const B: f64 = 0.75;

#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    term_freqs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    total_len: usize,
}

impl Bm25Index {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn add(&mut self, document: &str) {
        let tokens = word_tokens(document);
        let mut tf: HashMap<String, usize> = HashMap::new();
        for t in tokens.iter() {
            *tf.entry(t.clone()).or_insert(0) += 1;
        }
        for term in tf.keys() {
            *self.doc_freq.entry(term.clone()).or_insert(0) += 1;
        }
        self.total_len += tokens.len();
        self.lengths.push(tokens.len());
        self.term_freqs.push(tf);
    }

    /// `ln((N - n + 0.5) / (n + 0.5) + 1)`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        let total = self.len() as f64;
        ((total - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Score of every document, in insertion order. Repeated query terms
    /// count once per occurrence.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms = word_tokens(query);
        let avg = if self.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.len() as f64
        };
        let idfs: Vec<f64> = terms.iter().map(|t| self.idf(t)).collect();
        self.term_freqs
            .iter()
            .zip(&self.lengths)
            .map(|(tf, &len)| {
                let norm = if avg > 0.0 { len as f64 / avg } else { 1.0 };
                terms
                    .iter()
                    .zip(&idfs)
                    .map(|(t, idf)| {
                        let f = tf.get(t).copied().unwrap_or(0) as f64;
                        idf * f * (K1 + 1.0) / (f + K1 * (1.0 - B + B * norm))
                    })
                    .sum()
            })
            .collect()
    }

    /// Indices of the `k` best documents; ties go to the earlier document.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<usize> {
        let scores = self.scores(query);
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}
