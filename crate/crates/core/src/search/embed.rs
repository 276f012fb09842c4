//! Feature-hashed bag-of-words embeddings.

use crate::hashing::fnv1a64;

pub const MIN_DIM: usize = 8;

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashes each token into one of `dim` buckets with a ±1 sign, then
/// l2-normalizes. Text without tokens maps to the zero vector.
///
/// # Panics
/// If `dim < MIN_DIM`.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= MIN_DIM, "embedding dimension {dim} is below {MIN_DIM}");
    let mut v = vec![0.0; dim];
    for token in word_tokens(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}
