//! Library vs. oracle over random samples, for every registered signal.

use mia_core::datamodel::{Dataset, LogitSample, TextSample};
use mia_core::signals::{Scorer, Signal, SIGNAL_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles as o;
use super::samples::{random_logit_sample, random_text_sample};

pub struct Comparison {
    pub signal: &'static str,
    pub samples: usize,
    pub max_abs_err: f64,
    /// Distinct oracle values seen; guards against a vacuous comparison.
    pub distinct: usize,
}

fn oracle_text(name: &str, s: &TextSample, table: &[(Vec<String>, usize)]) -> f64 {
    match name {
        "max_coverage" => o::max_coverage(s, 4),
        "geo_edit_distance" => o::geo_edit_distance(s, 10),
        "rare_trigram_agg" => o::rare_trigram_agg(s, table),
        "rarity_longest_match" => o::rarity_longest_match(s, None),
        "inv_freq_mismatch" => o::inv_freq_mismatch(s, None, 7),
        "recurrent_rare_trigram" => o::recurrent_rare_trigram(s),
        "internal_repetition" => o::internal_repetition(s),
        other => panic!("not a text signal: {other}"),
    }
}

fn oracle_logit(name: &str, s: &LogitSample) -> f64 {
    match name {
        "max_renyi" => o::max_renyi(s, 0.5, 1),
        "rank_stability" => o::rank_stability(s, 0, 0.1, 5, 10),
        "log_ratio_variance" => o::log_ratio_variance(s, 8.0, 0.05),
        "topk_confidence" => o::topk_confidence(s, 5, 0.10),
        "neighbor_entropy_contrast" => o::neighbor_entropy_contrast(s, 128, 5),
        other => panic!("not a logit signal: {other}"),
    }
}

fn worst(pairs: impl Iterator<Item = (f64, f64)>) -> (f64, usize) {
    let mut seen: Vec<u64> = Vec::new();
    let mut err: f64 = 0.0;
    for (a, b) in pairs {
        assert!(a.is_finite() && b.is_finite(), "non-finite: {a} vs {b}");
        err = err.max((a - b).abs());
        if !seen.contains(&b.to_bits()) {
            seen.push(b.to_bits());
        }
    }
    (err, seen.len())
}

/// Text: up to 10 generations of up to 30 tokens. Logit: L in [6, 40],
/// V in [10, 64]. Default parameters throughout.
pub fn compare_all(n: usize, seed: u64) -> Vec<Comparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text: Vec<TextSample> = (0..n).map(|i| random_text_sample(&mut rng, i, 10, 30)).collect();
    let logit: Vec<LogitSample> = (0..n)
        .map(|i| {
            let len = rng.random_range(6..=40);
            let vocab = rng.random_range(10..=64);
            let scale = [0.5, 2.0, 6.0][i % 3];
            random_logit_sample(&mut rng, i, len, vocab, scale)
        })
        .collect();
    let text_data = Dataset::text(text.clone()).unwrap();
    let logit_data = Dataset::logit(logit.clone()).unwrap();
    let table = o::trigram_counts(&text);

    SIGNAL_NAMES
        .iter()
        .map(|&name| {
            let signal: Signal = name.parse().unwrap();
            let (err, distinct) = if let Ok(scorer) = Scorer::new(signal.clone(), &text_data) {
                worst(text.iter().map(|s| {
                    (scorer.score_text(s).unwrap(), oracle_text(name, s, &table))
                }))
            } else {
                let scorer = Scorer::new(signal, &logit_data).unwrap();
                worst(logit.iter().map(|s| (scorer.score_logit(s).unwrap(), oracle_logit(name, s))))
            };
            Comparison {
                signal: name,
                samples: n,
                max_abs_err: err,
                distinct,
            }
        })
        .collect()
}
