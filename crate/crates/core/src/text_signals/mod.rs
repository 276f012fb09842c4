//! Black-box text signals computed from a sample's ground-truth suffix and
//! the model's sampled continuations. All sequences are whitespace tokens.
//!
//! Every signal here is invariant to the order of `suffix_generations`.

mod edit;
mod ngram;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use edit::{levenshtein, levenshtein_capped, normalized_edit_distance};
pub use ngram::{
    build_trigram_freq_table, count_occurrences, longest_contiguous_match, ngram_coverage,
    TrigramFreqTable,
};

use crate::datamodel::{tokenize, TextSample};

/// Default n-gram order of the max-coverage baseline.
pub const DEFAULT_COVERAGE_ORDER: usize = 4;
/// Edit-distance cap of the geometric edit-distance signal.
pub const DEFAULT_EDIT_CAP: usize = 10;
/// Fraction of closest generations kept by the inverse-frequency mismatch.
pub const DEFAULT_KEEP_FRACTION: f64 = 0.7;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Max over generations of the `order`-gram coverage of the suffix.
pub fn signal_max_coverage(sample: &TextSample, order: usize) -> f64 {
    let suffix = sample.suffix_tokens();
    sample
        .suffix_generations
        .iter()
        .map(|g| ngram_coverage(&tokenize(g), &suffix, order))
        .fold(0.0, f64::max)
}

/// Geometric mean of ground-truth proximity and inter-generation consistency,
/// both measured with the capped normalized edit distance.
pub fn signal_geometric_edit_distance(sample: &TextSample, d_max: usize) -> f64 {
    let suffix = sample.suffix_tokens();
    let gens = sample.generation_tokens();
    let mut to_truth: Vec<f64> = gens
        .iter()
        .map(|g| normalized_edit_distance(g, &suffix, Some(d_max)))
        .collect();
    let proximity = 1.0 - median(&mut to_truth);

    let mut pairwise = Vec::with_capacity(gens.len() * gens.len().saturating_sub(1) / 2);
    for (i, a) in gens.iter().enumerate() {
        for b in &gens[i + 1..] {
            pairwise.push(normalized_edit_distance(a, b, Some(d_max)));
        }
    }
    // A lone generation carries no evidence of inconsistency.
    let consistency = if pairwise.is_empty() {
        1.0
    } else {
        1.0 - median(&mut pairwise)
    };
    (proximity * consistency).max(0.0).sqrt().clamp(0.0, 1.0)
}

/// Builds the global trigram table from every generation of every sample.
pub fn trigram_table_from_generations<'a, I>(samples: I) -> TrigramFreqTable
where
    I: IntoIterator<Item = &'a TextSample>,
{
    let mut table = TrigramFreqTable::new();
    for sample in samples {
        for g in &sample.suffix_generations {
            table.add_sequence(&tokenize(g));
        }
    }
    table
}

/// Sum over distinct generated trigrams of `ln(1 / (freq * recurrence))`,
/// where recurrence is the number of generations containing the trigram.
pub fn signal_rare_trigram_aggregation(sample: &TextSample, freq: &TrigramFreqTable) -> f64 {
    let gens = sample.generation_tokens();
    let mut recurrence: BTreeMap<[&str; 3], usize> = BTreeMap::new();
    for g in &gens {
        let distinct: BTreeSet<[&str; 3]> = g.windows(3).map(|w| [w[0], w[1], w[2]]).collect();
        for gram in distinct {
            *recurrence.entry(gram).or_insert(0) += 1;
        }
    }
    recurrence
        .iter()
        .map(|(gram, &r)| -(freq.count(gram) as f64 * r as f64).ln())
        .sum()
}

/// Max over generations of `1 - d * (1 - min(w / (N + 1), 1))`, where `d` is
/// the normalized edit distance to the suffix and `w` the rarity of the
/// longest contiguous match within the suffix's 1/2/3-gram counts.
///
/// Matches longer than three tokens are counted by their occurrences in the
/// suffix. `d_max = None` uses the exact distance.
pub fn signal_rarity_weighted_longest_match(sample: &TextSample, d_max: Option<usize>) -> f64 {
    let suffix = sample.suffix_tokens();
    let len = suffix.len();
    if len == 0 {
        return 0.0;
    }
    let total = (len + len.saturating_sub(1) + len.saturating_sub(2)) as f64;
    sample
        .generation_tokens()
        .iter()
        .map(|g| {
            let dist = normalized_edit_distance(g, &suffix, d_max);
            let span = longest_contiguous_match(g, &suffix);
            let weight = if span.len() >= 2 {
                total / count_occurrences(&suffix, span) as f64
            } else {
                total / len as f64
            };
            1.0 - dist * (1.0 - (weight / (total + 1.0)).min(1.0))
        })
        .reduce(f64::max)
        .unwrap_or(0.0)
}

/// Number of generations kept by a fraction filter: `ceil(fraction * d)`,
/// at least one and at most `d`.
pub fn keep_count(fraction: f64, total: usize) -> usize {
    // the epsilon absorbs products like 0.7 * 20 = 14.000000000000002
    let raw = (fraction * total as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(total)
}

/// Max inverse-frequency-weighted positional mismatch against the suffix,
/// over the generations closest to the suffix by edit distance.
///
/// Closeness ties are broken by comparing token sequences, which keeps the
/// retained set independent of generation order.
pub fn signal_inverse_frequency_mismatch(
    sample: &TextSample,
    d_max: Option<usize>,
    keep_fraction: f64,
) -> f64 {
    let suffix = sample.suffix_tokens();
    let len = suffix.len();
    if len == 0 {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &suffix {
        *counts.entry(t).or_insert(0) += 1;
    }
    let weights: Vec<f64> = suffix
        .iter()
        .map(|t| len as f64 / counts[t] as f64)
        .collect();

    let gens = sample.generation_tokens();
    let mut ranked: Vec<(usize, &Vec<&str>)> = gens
        .iter()
        .map(|g| {
            let dist = match d_max {
                Some(cap) => levenshtein_capped(g, &suffix, cap),
                None => levenshtein(g, &suffix),
            };
            (dist, g)
        })
        .collect();
    ranked.sort();
    let keep = keep_count(keep_fraction, ranked.len());

    ranked[..keep]
        .iter()
        .map(|(_, g)| {
            suffix
                .iter()
                .enumerate()
                .filter(|&(i, t)| g.get(i) != Some(t))
                .map(|(i, _)| weights[i])
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Sum of `1 / (1 + c)` over suffix trigrams (with suffix count `c`) that
/// appear in at least two generations.
pub fn signal_recurrent_rare_trigram(sample: &TextSample) -> f64 {
    let suffix = sample.suffix_tokens();
    let mut suffix_counts: BTreeMap<[&str; 3], usize> = BTreeMap::new();
    for w in suffix.windows(3) {
        *suffix_counts.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    if suffix_counts.is_empty() {
        return 0.0;
    }
    let mut appearances: BTreeMap<[&str; 3], usize> = BTreeMap::new();
    for g in sample.generation_tokens() {
        let distinct: BTreeSet<[&str; 3]> = g
            .windows(3)
            .map(|w| [w[0], w[1], w[2]])
            .filter(|gram| suffix_counts.contains_key(gram))
            .collect();
        for gram in distinct {
            *appearances.entry(gram).or_insert(0) += 1;
        }
    }
    suffix_counts
        .iter()
        .filter(|(gram, _)| appearances.get(*gram).copied().unwrap_or(0) >= 2)
        .map(|(_, &c)| 1.0 / (1.0 + c as f64))
        .sum()
}

/// Excess occurrences of repeated 3-, 4- and 5-grams within one sequence,
/// divided by its length. Empty sequences score 0.
pub fn repetition_score(tokens: &[&str]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let mut excess = 0usize;
    for n in 3..=5 {
        let mut counts: HashMap<&[&str], usize> = HashMap::new();
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
        excess += counts.values().filter(|&&c| c >= 2).map(|c| c - 1).sum::<usize>();
    }
    excess as f64 / tokens.len() as f64
}

/// Mean internal repetition score over all generations.
pub fn signal_internal_repetition(sample: &TextSample) -> f64 {
    let gens = &sample.suffix_generations;
    if gens.is_empty() {
        return 0.0;
    }
    gens.iter().map(|g| repetition_score(&tokenize(g))).sum::<f64>() / gens.len() as f64
}
