//! Gray-box signals computed from per-position logit rows.
//!
//! Rows are stored as `f32` and promoted to `f64` before any arithmetic.
//! Every signal follows the "higher means member" orientation. Percentile
//! cut-offs use linear interpolation between order statistics, and top-k
//! selections break ties by the lower token (or position) index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::datamodel::LogitSample;
use crate::hashing::Fnv1a;

pub const DEFAULT_RENYI_ALPHA: f64 = 0.5;
pub const DEFAULT_RENYI_TOP_FRACTION: f64 = 0.10;
pub const DEFAULT_NOISE_PASSES: usize = 5;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
pub const DEFAULT_RANK_K: usize = 10;
pub const DEFAULT_DECAY_SCALE: f64 = 8.0;
pub const DEFAULT_VARIANCE_TOP_FRACTION: f64 = 0.05;
pub const DEFAULT_CONFIDENCE_K: usize = 5;
pub const DEFAULT_CONFIDENCE_TOP_FRACTION: f64 = 0.10;
pub const DEFAULT_EMBED_DIMS: usize = 128;
pub const DEFAULT_NEIGHBORS: usize = 5;

/// Number of alternatives compared against the true token in the log-ratio
/// variance signal.
const ALTERNATIVES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum LogitSignalError {
    #[error("vocabulary size {vocab} is below the required {needed}")]
    VocabTooSmall { vocab: usize, needed: usize },
    #[error("sequence length {len} is below the required {needed}")]
    TooFewPositions { len: usize, needed: usize },
    #[error("rank vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("probabilities must lie in [0, 1] and sum to 1")]
    NotADistribution,
}

/// A discrete probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, LogitSignalError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty()
            || probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(LogitSignalError::NotADistribution);
        }
        Ok(Self(probs))
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self(log_softmax_row(logits).into_iter().map(f64::exp).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Gaussian logit perturbation used by the rank-stability signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub passes: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            passes: DEFAULT_NOISE_PASSES,
            sigma: DEFAULT_NOISE_SIGMA,
            seed: 0,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable `log(softmax(z))`.
pub fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let norm = log_sum_exp(z.iter().copied());
    z.iter().map(|v| v - norm).collect()
}

fn row_f64(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

/// Rényi entropy of order `alpha` (`alpha > 0`, `alpha != 1`), in nats.
pub fn renyi_entropy(p: &ProbVector, alpha: f64) -> f64 {
    let sum: f64 = p.0.iter().filter(|&&x| x > 0.0).map(|x| x.powf(alpha)).sum();
    sum.ln() / (1.0 - alpha)
}

pub fn shannon_entropy(p: &ProbVector) -> f64 {
    -p.0.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn renyi_from_log_probs(log_probs: &[f64], alpha: f64) -> f64 {
    log_sum_exp(log_probs.iter().map(|lp| alpha * lp)) / (1.0 - alpha)
}

fn shannon_from_log_probs(log_probs: &[f64]) -> f64 {
    -log_probs
        .iter()
        .map(|&lp| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() * lp })
        .sum::<f64>()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let value = sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]);
    // rounding must never push the cut-off past the element it interpolates to
    value.min(sorted[hi])
}

/// Mean of the values at or above the `1 - top_fraction` percentile. The
/// maximum always qualifies, so the selection is never empty.
fn upper_tail_mean(values: &[f64], top_fraction: f64) -> f64 {
    let cut = percentile(values, 1.0 - top_fraction);
    let tail: Vec<f64> = values.iter().copied().filter(|&v| v >= cut).collect();
    mean(&tail)
}

/// Indices of the `k` largest entries, largest first, ties to lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let order = |&a: &usize, &b: &usize| values[b].total_cmp(&values[a]).then(a.cmp(&b));
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_by(order);
    idx
}

fn check_fraction(name: &str, value: f64) -> Result<(), LogitSignalError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(LogitSignalError::InvalidParameter(format!(
            "{name} must be in (0, 1], got {value}"
        )))
    }
}

/// Negated mean Rényi entropy over the `ceil(top_fraction * L)` positions
/// with the lowest entropy (at least one).
pub fn signal_max_renyi(
    sample: &LogitSample,
    alpha: f64,
    top_fraction: f64,
) -> Result<f64, LogitSignalError> {
    if alpha.is_nan() || alpha <= 0.0 || alpha == 1.0 {
        return Err(LogitSignalError::InvalidParameter(format!(
            "alpha must be positive and != 1, got {alpha}"
        )));
    }
    check_fraction("top_fraction", top_fraction)?;
    let mut entropies: Vec<f64> = sample
        .rows()
        .map(|row| renyi_from_log_probs(&log_softmax_row(&row_f64(row)), alpha))
        .collect();
    entropies.sort_by(f64::total_cmp);
    let keep = crate::text_signals::keep_count(top_fraction, entropies.len());
    Ok(-mean(&entropies[..keep]))
}

/// Normalized count of discordant pairs between two rank vectors.
///
/// Only distinct values present in both vectors take part; each value is
/// placed at its first occurrence. The count is divided by `C(k, 2)`.
/// Fewer than two shared values give 0.
pub fn pairwise_rank_inversion(r1: &[u32], r2: &[u32], k: usize) -> Result<f64, LogitSignalError> {
    if r1.len() != r2.len() {
        return Err(LogitSignalError::LengthMismatch(r1.len(), r2.len()));
    }
    if k < 2 {
        return Err(LogitSignalError::InvalidParameter(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let first_positions = |r: &[u32]| {
        let mut pos = std::collections::HashMap::new();
        for (i, &v) in r.iter().enumerate() {
            pos.entry(v).or_insert(i);
        }
        pos
    };
    let pos1 = first_positions(r1);
    let pos2 = first_positions(r2);
    let mut shared: Vec<(usize, usize)> = pos1
        .iter()
        .filter_map(|(v, &p1)| pos2.get(v).map(|&p2| (p1, p2)))
        .collect();
    if shared.len() < 2 {
        return Ok(0.0);
    }
    shared.sort_unstable();
    let mut order: Vec<usize> = shared.into_iter().map(|(_, p2)| p2).collect();
    let inversions = count_inversions(&mut order);
    Ok(inversions as f64 / (k * (k - 1) / 2) as f64)
}

/// Merge-sort inversion count; sorts `values` as a side effect.
fn count_inversions(values: &mut [usize]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut values[..mid]) + count_inversions(&mut values[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if values[i] <= values[j] {
            merged.push(values[i]);
            i += 1;
        } else {
            merged.push(values[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&values[i..mid]);
    merged.extend_from_slice(&values[j..n]);
    values.copy_from_slice(&merged);
    count
}

/// Seed for one perturbation pass: FNV-1a over the little-endian run seed,
/// the sample id bytes, a 0xFF separator and the little-endian pass index.
pub fn noise_seed(seed: u64, sample_id: &str, pass: usize) -> u64 {
    Fnv1a::new()
        .write_u64(seed)
        .write(sample_id.as_bytes())
        .write(&[0xff])
        .write_u64(pass as u64)
        .finish()
}

/// Top-k token indices of every perturbed row, concatenated across positions.
pub fn perturbed_rank_vector(sample: &LogitSample, noise: &NoiseSpec, pass: usize, k: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(noise.seed, sample.id(), pass));
    let normal = (noise.sigma > 0.0).then(|| Normal::new(0.0, noise.sigma).expect("finite sigma"));
    let mut ranks = Vec::with_capacity(sample.len() * k);
    for row in sample.rows() {
        let perturbed: Vec<f64> = row
            .iter()
            .map(|&z| f64::from(z) + normal.map_or(0.0, |n| n.sample(&mut rng)))
            .collect();
        ranks.extend(top_k_indices(&perturbed, k).into_iter().map(|i| i as u32));
    }
    ranks
}

/// Negated mean pairwise rank inversion between `passes` noisy copies of the
/// logits. Zero means the top-k orderings never changed.
pub fn signal_rank_stability(
    sample: &LogitSample,
    noise: &NoiseSpec,
    k: usize,
) -> Result<f64, LogitSignalError> {
    if sample.vocab() < k {
        return Err(LogitSignalError::VocabTooSmall {
            vocab: sample.vocab(),
            needed: k,
        });
    }
    if noise.passes < 2 {
        return Err(LogitSignalError::InvalidParameter(format!(
            "passes must be at least 2, got {}",
            noise.passes
        )));
    }
    if !noise.sigma.is_finite() || noise.sigma < 0.0 {
        return Err(LogitSignalError::InvalidParameter(format!(
            "sigma must be finite and non-negative, got {}",
            noise.sigma
        )));
    }
    let vectors: Vec<Vec<u32>> = (0..noise.passes)
        .map(|p| perturbed_rank_vector(sample, noise, p, k))
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (p, a) in vectors.iter().enumerate() {
        for b in &vectors[p + 1..] {
            total += pairwise_rank_inversion(a, b, k)?;
            pairs += 1;
        }
    }
    Ok(-(total / pairs as f64))
}

/// Decayed variance of the log-ratio gaps between the true token and its
/// five strongest alternatives, for every position.
pub fn log_ratio_variances(
    sample: &LogitSample,
    decay_scale: f64,
) -> Result<Vec<f64>, LogitSignalError> {
    if sample.vocab() < ALTERNATIVES + 1 {
        return Err(LogitSignalError::VocabTooSmall {
            vocab: sample.vocab(),
            needed: ALTERNATIVES + 1,
        });
    }
    if decay_scale.is_nan() || decay_scale <= 0.0 {
        return Err(LogitSignalError::InvalidParameter(format!(
            "decay_scale must be positive, got {decay_scale}"
        )));
    }
    Ok(sample
        .rows()
        .zip(sample.true_tokens())
        .enumerate()
        .map(|(i, (row, &t))| {
            let z = row_f64(row);
            let truth = log_softmax_row(&z)[t as usize];
            let mut alts = top_k_indices(&z, ALTERNATIVES + 1);
            alts.retain(|&j| j != t as usize);
            alts.truncate(ALTERNATIVES);
            let norm = log_sum_exp(alts.iter().map(|&j| z[j]));
            let gaps: Vec<f64> = alts.iter().map(|&j| truth - (z[j] - norm)).collect();
            let m = mean(&gaps);
            let var = gaps.iter().map(|g| (g - m).powi(2)).sum::<f64>() / gaps.len() as f64;
            var * (-(i as f64) / decay_scale).exp()
        })
        .collect())
}

/// Mean of the decayed log-ratio variances in the top `top_fraction` tail.
pub fn signal_log_ratio_variance(
    sample: &LogitSample,
    decay_scale: f64,
    top_fraction: f64,
) -> Result<f64, LogitSignalError> {
    check_fraction("top_fraction", top_fraction)?;
    let variances = log_ratio_variances(sample, decay_scale)?;
    Ok(upper_tail_mean(&variances, top_fraction))
}

/// Mean log-probability of the `k` most likely tokens at every position.
pub fn topk_mean_log_probs(sample: &LogitSample, k: usize) -> Result<Vec<f64>, LogitSignalError> {
    if k == 0 || sample.vocab() < k {
        return Err(LogitSignalError::VocabTooSmall {
            vocab: sample.vocab(),
            needed: k.max(1),
        });
    }
    Ok(sample
        .rows()
        .map(|row| {
            let lp = log_softmax_row(&row_f64(row));
            top_k_indices(&lp, k).iter().map(|&j| lp[j]).sum::<f64>() / k as f64
        })
        .collect())
}

/// Mean top-k confidence over the most confident `top_fraction` of positions.
pub fn signal_topk_confidence(
    sample: &LogitSample,
    k: usize,
    top_fraction: f64,
) -> Result<f64, LogitSignalError> {
    check_fraction("top_fraction", top_fraction)?;
    Ok(upper_tail_mean(&topk_mean_log_probs(sample, k)?, top_fraction))
}

/// Mean over positions of `log p(true token)` minus the mean Shannon entropy
/// of the `k` positions whose leading logits are most cosine-similar.
pub fn signal_neighbor_entropy_contrast(
    sample: &LogitSample,
    embed_dims: usize,
    k: usize,
) -> Result<f64, LogitSignalError> {
    let len = sample.len();
    if k == 0 || len < k + 1 {
        return Err(LogitSignalError::TooFewPositions {
            len,
            needed: k.max(1) + 1,
        });
    }
    if embed_dims == 0 {
        return Err(LogitSignalError::InvalidParameter(
            "embed_dims must be positive".into(),
        ));
    }
    let dims = embed_dims.min(sample.vocab());
    let embeddings: Vec<Vec<f64>> = sample
        .rows()
        .map(|row| {
            let e = row_f64(&row[..dims]);
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                e.into_iter().map(|v| v / norm).collect()
            } else {
                e.into_iter().map(|_| 0.0).collect()
            }
        })
        .collect();
    let log_probs: Vec<Vec<f64>> = sample.rows().map(|r| log_softmax_row(&row_f64(r))).collect();
    let entropies: Vec<f64> = log_probs.iter().map(|lp| shannon_from_log_probs(lp)).collect();

    let mut total = 0.0;
    for i in 0..len {
        let mut sims: Vec<f64> = embeddings
            .iter()
            .map(|e| e.iter().zip(&embeddings[i]).map(|(a, b)| a * b).sum())
            .collect();
        sims[i] = f64::NEG_INFINITY;
        let neighbors = top_k_indices(&sims, k);
        let neighbor_entropy = neighbors.iter().map(|&j| entropies[j]).sum::<f64>() / k as f64;
        let truth = log_probs[i][sample.true_tokens()[i] as usize];
        total += truth - neighbor_entropy;
    }
    Ok(total / len as f64)
}
