//! N-gram primitives shared by the text signals.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

/// Fraction of positions in `x2` whose `n`-gram ending at that position also
/// occurs somewhere in `x1`.
///
/// The denominator is `|x2|`, so the first `n - 1` positions (which have no
/// full `n`-gram) always count as misses. Empty `x2` gives 0.
pub fn ngram_coverage<T: Eq + Hash>(x1: &[T], x2: &[T], n: usize) -> f64 {
    if x2.is_empty() || n == 0 || x1.len() < n {
        return 0.0;
    }
    let seen: HashSet<&[T]> = x1.windows(n).collect();
    let hits = x2.windows(n).filter(|w| seen.contains(w)).count();
    hits as f64 / x2.len() as f64
}

/// Occurrence counts of token trigrams over a reference corpus. Absent
/// trigrams count as 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigramFreqTable {
    counts: HashMap<String, u64>,
}

// Tokens never contain whitespace, so a space-joined key is unambiguous.
fn trigram_key(buf: &mut String, gram: &[&str]) {
    buf.clear();
    for (i, tok) in gram.iter().enumerate() {
        if i > 0 {
            buf.push(' ');
        }
        buf.push_str(tok);
    }
}

impl TrigramFreqTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts every trigram occurrence of one token sequence.
    pub fn add_sequence(&mut self, tokens: &[&str]) {
        let mut key = String::new();
        for gram in tokens.windows(3) {
            trigram_key(&mut key, gram);
            *self.counts.entry(key.clone()).or_insert(0) += 1;
        }
    }

    pub fn count(&self, gram: &[&str; 3]) -> u64 {
        let mut key = String::new();
        trigram_key(&mut key, gram);
        self.counts.get(&key).copied().unwrap_or(1)
    }

    /// Number of distinct trigrams stored.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn build_trigram_freq_table<'a, I>(corpus: I) -> TrigramFreqTable
where
    I: IntoIterator<Item = &'a [&'a str]>,
{
    let mut table = TrigramFreqTable::new();
    for seq in corpus {
        table.add_sequence(seq);
    }
    table
}

/// Longest span of at least two tokens occurring contiguously in both `g`
/// and `r`, returned as a slice of `r`. Ties go to the earliest start in `r`.
pub fn longest_contiguous_match<'r, T: PartialEq>(g: &[T], r: &'r [T]) -> &'r [T] {
    let mut best_len = 0;
    let mut best_start = 0;
    // prev[j + 1] = length of the common suffix ending at g[i-1], r[j]
    let mut prev = vec![0usize; r.len() + 1];
    let mut cur = vec![0usize; r.len() + 1];
    for x in g {
        for (j, y) in r.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            let len = cur[j + 1];
            if len == 0 {
                continue;
            }
            let start = j + 1 - len;
            if len > best_len || (len == best_len && start < best_start) {
                best_len = len;
                best_start = start;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    if best_len >= 2 {
        &r[best_start..best_start + best_len]
    } else {
        &r[..0]
    }
}

/// Number of (possibly overlapping) occurrences of `span` in `seq`.
pub fn count_occurrences<T: PartialEq>(seq: &[T], span: &[T]) -> usize {
    if span.is_empty() || span.len() > seq.len() {
        return 0;
    }
    seq.windows(span.len()).filter(|w| *w == span).count()
}
