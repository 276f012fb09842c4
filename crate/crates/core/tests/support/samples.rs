//! Random and constructed samples for oracle comparisons.

use mia_core::datamodel::{LogitSample, Membership, TextSample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn words(rng: &mut ChaCha8Rng, vocab: &[&str], len: usize) -> String {
    (0..len)
        .map(|_| vocab[rng.random_range(0..vocab.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Small vocabulary so that shared n-grams and repeats are common.
pub const SMALL_VOCAB: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// Up to `max_gens` generations and `max_tokens` tokens per sequence. The
/// suffix has at least one token; generations may be empty.
pub fn random_text_sample(rng: &mut ChaCha8Rng, id: usize, max_gens: usize, max_tokens: usize) -> TextSample {
    let suffix_len = rng.random_range(1..=max_tokens);
    let suffix = words(rng, &SMALL_VOCAB, suffix_len);
    let d = rng.random_range(1..=max_gens);
    let gens = (0..d)
        .map(|_| {
            // half of the generations are noisy copies of the suffix
            if rng.random_bool(0.5) {
                let mut toks: Vec<&str> = suffix.split(' ').collect();
                for t in toks.iter_mut() {
                    if rng.random_bool(0.2) {
                        *t = SMALL_VOCAB[rng.random_range(0..SMALL_VOCAB.len())];
                    }
                }
                let keep = rng.random_range(0..=toks.len());
                toks[..keep].join(" ")
            } else {
                let n = rng.random_range(0..=max_tokens);
                words(rng, &SMALL_VOCAB, n)
            }
        })
        .collect();
    TextSample {
        id: format!("t{id}"),
        label: if id.is_multiple_of(2) { Membership::Member } else { Membership::NonMember },
        original_text: format!("p q {suffix}"),
        prefix: "p q".into(),
        ground_truth_suffix: suffix,
        suffix_generations: gens,
    }
}

pub fn random_logit_sample(
    rng: &mut ChaCha8Rng,
    id: usize,
    len: usize,
    vocab: usize,
    scale: f64,
) -> LogitSample {
    let normal = Normal::new(0.0, scale).unwrap();
    let rows: Vec<Vec<f32>> = (0..len)
        .map(|_| (0..vocab).map(|_| normal.sample(rng) as f32).collect())
        .collect();
    let tokens = (0..len).map(|_| rng.random_range(0..vocab as u32)).collect();
    let label = if id.is_multiple_of(2) { Membership::Member } else { Membership::NonMember };
    LogitSample::from_rows(format!("l{id}"), &rows, tokens, label).unwrap()
}

/// Members' generations copy the suffix; non-members' generations use a
/// vocabulary disjoint from the suffix. `n` samples, alternating labels.
pub fn separable_text(n: usize, seed: u64) -> Vec<TextSample> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let member_vocab: Vec<String> = (0..40).map(|i| format!("m{i}")).collect();
    let other_vocab: Vec<String> = (0..40).map(|i| format!("x{i}")).collect();
    let mv: Vec<&str> = member_vocab.iter().map(String::as_str).collect();
    let ov: Vec<&str> = other_vocab.iter().map(String::as_str).collect();
    (0..n)
        .map(|i| {
            let member = i % 2 == 0;
            let prefix = words(&mut rng, &mv, 12);
            let suffix_len = rng.random_range(8..=14);
            let suffix = words(&mut rng, &mv, suffix_len);
            let gens = (0..5)
                .map(|_| {
                    if member {
                        suffix.clone()
                    } else {
                        let len = rng.random_range(8..=14);
                        words(&mut rng, &ov, len)
                    }
                })
                .collect();
            TextSample {
                id: format!("s{i:03}"),
                label: if member { Membership::Member } else { Membership::NonMember },
                original_text: format!("{prefix} {suffix}"),
                prefix,
                ground_truth_suffix: suffix,
                suffix_generations: gens,
            }
        })
        .collect()
}
