mod support;

use mia_core::datamodel::{Membership, TextSample};
use mia_core::logit_signals::{
    pairwise_rank_inversion, renyi_entropy, shannon_entropy, ProbVector,
};
use mia_core::text_signals::{
    build_trigram_freq_table, levenshtein_capped, longest_contiguous_match, ngram_coverage,
    normalized_edit_distance, signal_geometric_edit_distance, signal_inverse_frequency_mismatch,
    signal_rare_trigram_aggregation, signal_rarity_weighted_longest_match,
    signal_recurrent_rare_trigram, signal_internal_repetition, TrigramFreqTable,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles as o;
use support::transcription::compare_all;

fn sample(suffix: &str, gens: &[&str]) -> TextSample {
    TextSample {
        id: "x".into(),
        label: Membership::Member,
        original_text: format!("p {suffix}"),
        prefix: "p".into(),
        ground_truth_suffix: suffix.into(),
        suffix_generations: gens.iter().map(|g| g.to_string()).collect(),
    }
}

#[test]
fn every_signal_matches_its_transcription() {
    for c in compare_all(100, 7) {
        println!("{:<26} max |err| {:.3e}  distinct {}", c.signal, c.max_abs_err, c.distinct);
        assert!(c.distinct >= 10, "{}: only {} distinct values", c.signal, c.distinct);
        assert!(
            c.max_abs_err <= 1e-9,
            "{}: max error {:e} over {} samples",
            c.signal,
            c.max_abs_err,
            c.samples
        );
    }
}

#[test]
fn capped_levenshtein_vs_wagner_fischer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let a: Vec<u8> = (0..rng.random_range(0..=20)).map(|_| rng.random_range(0..10)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..=20)).map(|_| rng.random_range(0..10)).collect();
        let cap = rng.random_range(1..=12);
        let truth = o::wagner_fischer(&a, &b);
        let want = if truth <= cap { truth } else { cap + 1 };
        assert_eq!(levenshtein_capped(&a, &b, cap), want, "{a:?} {b:?} cap {cap}");
    }
}

#[test]
fn edit_distance_examples() {
    assert_eq!(levenshtein_capped(&["a", "b"], &["a", "b"], 10), 0);
    assert_eq!(levenshtein_capped(&["a", "b"], &["a", "x"], 10), 1);
    assert_eq!(normalized_edit_distance(&["a"], &["b"], Some(10)), 1.0);
    // lengths 3 and 5, distance 4
    let a = ["x", "y", "z"];
    let b = ["p", "q", "r", "z", "s"];
    assert_eq!(o::wagner_fischer(&a, &b), 4);
    assert_eq!(normalized_edit_distance(&a, &b, Some(10)), 0.8);
}

#[test]
fn coverage_examples() {
    let x = ["t", "t", "t", "t", "t"];
    assert_eq!(ngram_coverage(&x, &x, 3), 0.6);
    assert_eq!(ngram_coverage(&["a", "b"], &["c", "d"], 2), 0.0);
    assert_eq!(ngram_coverage(&["c", "b", "a"], &["a", "b", "b"], 1), 1.0);
}

#[test]
fn geometric_edit_distance_examples() {
    assert_eq!(signal_geometric_edit_distance(&sample("a b c", &["a b c", "a b c"]), 10), 1.0);
    assert_eq!(signal_geometric_edit_distance(&sample("a b", &["c d", "e f", "g h"]), 10), 0.0);
    let s = sample("a b c d", &["a b x d", "a c d", "q b c d e"]);
    let v = signal_geometric_edit_distance(&s, 10);
    assert!((v - o::geo_edit_distance(&s, 10)).abs() < 1e-12);
}

#[test]
fn trigram_table_matches_naive_counter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seqs: Vec<String> = (0..100)
        .map(|_| {
            let n = rng.random_range(0..12);
            support::samples::words(&mut rng, &["a", "b", "c"], n)
        })
        .collect();
    let tokens: Vec<Vec<&str>> = seqs.iter().map(|s| s.split_whitespace().collect()).collect();
    let table = build_trigram_freq_table(tokens.iter().map(Vec::as_slice));
    let corpus: Vec<TextSample> = seqs.iter().map(|s| sample("z", &[s.as_str()])).collect();
    let naive = o::trigram_counts(&corpus);
    assert_eq!(table.len(), naive.len());
    for (gram, count) in naive {
        let key = [gram[0].as_str(), gram[1].as_str(), gram[2].as_str()];
        assert_eq!(table.count(&key), count as u64);
    }
    let empty = TrigramFreqTable::new();
    assert_eq!(empty.count(&["a", "b", "c"]), 1);
    let one = build_trigram_freq_table([["a", "b", "c", "d"].as_slice()]);
    assert_eq!(one.count(&["a", "b", "c"]), 1);
    assert_eq!(one.count(&["b", "c", "d"]), 1);
}

#[test]
fn rare_trigram_examples() {
    let table = TrigramFreqTable::new();
    assert_eq!(signal_rare_trigram_aggregation(&sample("a", &["a b c", "d e f"]), &table), 0.0);
    let v = signal_rare_trigram_aggregation(&sample("a", &["a b c", "a b c"]), &table);
    assert!((v - 0.5f64.ln()).abs() < 1e-12);
    assert_eq!(signal_rare_trigram_aggregation(&sample("a", &["a b", "c"]), &table), 0.0);
}

#[test]
fn longest_match_vs_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let g: Vec<String> = (0..rng.random_range(0..15)).map(|_| format!("{}", rng.random_range(0..4))).collect();
        let r: Vec<String> = (0..rng.random_range(0..15)).map(|_| format!("{}", rng.random_range(0..4))).collect();
        let got = longest_contiguous_match(&g, &r);
        assert_eq!(got, o::longest_match(&g, &r).as_slice());
    }
    assert_eq!(longest_contiguous_match(&["a", "b", "c"], &["a", "b", "c"]), &["a", "b", "c"]);
    assert!(longest_contiguous_match(&["a", "b"], &["b", "a"]).is_empty());
}

#[test]
fn rarity_longest_match_examples() {
    assert_eq!(signal_rarity_weighted_longest_match(&sample("a b c", &["a b c", "x"]), None), 1.0);
    let s = sample("a b c a b", &["a b q", "c a x y"]);
    let v = signal_rarity_weighted_longest_match(&s, None);
    assert!((v - o::rarity_longest_match(&s, None)).abs() < 1e-12);
}

#[test]
fn inverse_frequency_examples() {
    assert_eq!(signal_inverse_frequency_mismatch(&sample("a b", &["a b", "a b"]), None, 0.7), 0.0);
    assert_eq!(signal_inverse_frequency_mismatch(&sample("a b", &["a c"]), None, 0.7), 2.0);
    // short generation misses the trailing positions: w = 3 for each
    assert_eq!(signal_inverse_frequency_mismatch(&sample("a b c", &["a"]), None, 0.7), 6.0);
}

#[test]
fn recurrent_rare_trigram_examples() {
    assert_eq!(signal_recurrent_rare_trigram(&sample("a b c d", &["a b c", "x y"])), 0.0);
    let s = sample("a b c", &["a b c", "z a b c", "a b c q"]);
    assert_eq!(signal_recurrent_rare_trigram(&s), 0.5);
    assert_eq!(signal_recurrent_rare_trigram(&sample("a b", &["a b", "a b"])), 0.0);
}

#[test]
fn internal_repetition_examples() {
    assert_eq!(signal_internal_repetition(&sample("a", &["a b c d e f"])), 0.0);
    assert_eq!(signal_internal_repetition(&sample("a", &["a b c a b c a b c"])), 1.0);
    assert_eq!(signal_internal_repetition(&sample("a", &["a a"])), 0.0);
}

#[test]
fn renyi_anchors() {
    for v in [2usize, 7, 50] {
        let p = ProbVector::new(vec![1.0 / v as f64; v]).unwrap();
        for alpha in [0.5, 2.0] {
            assert!((renyi_entropy(&p, alpha) - (v as f64).ln()).abs() < 1e-12);
        }
    }
    let p = ProbVector::new(vec![0.5, 0.25, 0.25]).unwrap();
    let closed_form = 2.0 * (0.5f64.sqrt() + 1.0).ln();
    assert!((renyi_entropy(&p, 0.5) - closed_form).abs() < 1e-12);
    assert!((renyi_entropy(&p, 0.5) - o::renyi(&[0.5, 0.25, 0.25], 0.5)).abs() < 1e-12);
    let one_hot = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
    assert_eq!(renyi_entropy(&one_hot, 0.5), 0.0);
    assert_eq!(shannon_entropy(&one_hot), 0.0);
}

#[test]
fn rank_inversion_vs_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let mut a: Vec<u32> = (0..20).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        a.truncate(10);
        b.truncate(10);
        let got = pairwise_rank_inversion(&a, &b, 10).unwrap();
        assert_eq!(got, o::rank_inversion(&a, &b, 10));
    }
    let r: Vec<u32> = (0..10).collect();
    let rev: Vec<u32> = r.iter().rev().copied().collect();
    assert_eq!(pairwise_rank_inversion(&r, &r, 10).unwrap(), 0.0);
    assert_eq!(pairwise_rank_inversion(&r, &rev, 10).unwrap(), 1.0);
    assert!(pairwise_rank_inversion(&r, &r[..3], 10).is_err());
}
