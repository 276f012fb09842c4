#![allow(clippy::needless_range_loop)]
//! Straight-line transcriptions of the signal and metric formulas. Naive on
//! purpose: full DP matrices, explicit sorts, nested loops, no shared code
//! with the library beyond sample accessors.

use mia_core::datamodel::{LogitSample, Membership, TextSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn suffix(s: &TextSample) -> Vec<String> {
    toks(&s.ground_truth_suffix)
}

pub fn gens(s: &TextSample) -> Vec<Vec<String>> {
    s.suffix_generations.iter().map(|g| toks(g)).collect()
}

// ---------------------------------------------------------------- text

pub fn wagner_fischer<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// min(ED, cap + 1) / max length, clamped; `None` is uncapped.
pub fn norm_ed(a: &[String], b: &[String], cap: Option<usize>) -> f64 {
    let m = a.len().max(b.len());
    if m == 0 {
        return 0.0;
    }
    let mut ed = wagner_fischer(a, b);
    if let Some(c) = cap {
        if ed > c {
            ed = c + 1;
        }
    }
    let v = ed as f64 / m as f64;
    if v > 1.0 {
        1.0
    } else {
        v
    }
}

fn contains_window(hay: &[String], needle: &[String]) -> bool {
    if needle.len() > hay.len() {
        return false;
    }
    for s in 0..=hay.len() - needle.len() {
        if hay[s..s + needle.len()] == *needle {
            return true;
        }
    }
    false
}

fn count_windows(hay: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    let mut c = 0;
    for s in 0..=hay.len() - needle.len() {
        if hay[s..s + needle.len()] == *needle {
            c += 1;
        }
    }
    c
}

/// Positions p (0-based) with p >= L-1 whose L-gram ending at p occurs in
/// x1, over |x2|.
pub fn coverage(x1: &[String], x2: &[String], l: usize) -> f64 {
    if x2.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for p in 0..x2.len() {
        if p + 1 >= l && contains_window(x1, &x2[p + 1 - l..=p]) {
            hits += 1;
        }
    }
    hits as f64 / x2.len() as f64
}

pub fn max_coverage(s: &TextSample, l: usize) -> f64 {
    let r = suffix(s);
    let mut best = 0.0;
    for g in gens(s) {
        let c = coverage(&g, &r, l);
        if c > best {
            best = c;
        }
    }
    best
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn geo_edit_distance(s: &TextSample, d_max: usize) -> f64 {
    let r = suffix(s);
    let g = gens(s);
    let to_r: Vec<f64> = g.iter().map(|x| norm_ed(x, &r, Some(d_max))).collect();
    let s1 = 1.0 - median(to_r);
    let mut pairs = Vec::new();
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            pairs.push(norm_ed(&g[i], &g[j], Some(d_max)));
        }
    }
    let s2 = if pairs.is_empty() { 1.0 } else { 1.0 - median(pairs) };
    let v = (s1 * s2).sqrt();
    v.clamp(0.0, 1.0)
}

/// Trigram occurrence counts over every generation of `corpus`.
pub fn trigram_counts(corpus: &[TextSample]) -> Vec<(Vec<String>, usize)> {
    let mut table: Vec<(Vec<String>, usize)> = Vec::new();
    for s in corpus {
        for g in gens(s) {
            for w in g.windows(3) {
                match table.iter_mut().find(|(k, _)| k.as_slice() == w) {
                    Some(e) => e.1 += 1,
                    None => table.push((w.to_vec(), 1)),
                }
            }
        }
    }
    table
}

pub fn rare_trigram_agg(s: &TextSample, table: &[(Vec<String>, usize)]) -> f64 {
    let g = gens(s);
    let mut distinct: Vec<Vec<String>> = Vec::new();
    for x in &g {
        for w in x.windows(3) {
            if !distinct.iter().any(|d| d.as_slice() == w) {
                distinct.push(w.to_vec());
            }
        }
    }
    let mut total = 0.0;
    for tau in &distinct {
        let freq = table
            .iter()
            .find(|(k, _)| k == tau)
            .map(|(_, c)| *c)
            .unwrap_or(1);
        let r = g.iter().filter(|x| contains_window(x, tau)).count();
        total += (1.0 / (freq as f64 * r as f64)).ln();
    }
    total
}

/// Longest common contiguous block of length >= 2, earliest start in r.
pub fn longest_match(g: &[String], r: &[String]) -> Vec<String> {
    for len in (2..=r.len().min(g.len())).rev() {
        for start in 0..=r.len() - len {
            if contains_window(g, &r[start..start + len]) {
                return r[start..start + len].to_vec();
            }
        }
    }
    Vec::new()
}

pub fn rarity_longest_match(s: &TextSample, d_max: Option<usize>) -> f64 {
    let r = suffix(s);
    if r.is_empty() {
        return 0.0;
    }
    // total count of 1-, 2- and 3-grams in r
    let mut n = 0usize;
    for k in 1..=3 {
        if r.len() >= k {
            n += r.len() - k + 1;
        }
    }
    let n = n as f64;
    let mut best = f64::NEG_INFINITY;
    for g in gens(s) {
        let d = norm_ed(&g, &r, d_max);
        let l = longest_match(&g, &r);
        let w = if l.len() >= 2 {
            n / count_windows(&r, &l) as f64
        } else {
            n / r.len() as f64
        };
        let ratio = if w / (n + 1.0) < 1.0 { w / (n + 1.0) } else { 1.0 };
        let f = 1.0 - d * (1.0 - ratio);
        if f > best {
            best = f;
        }
    }
    best
}

pub fn inv_freq_mismatch(s: &TextSample, d_max: Option<usize>, keep_tenths: usize) -> f64 {
    let r = suffix(s);
    let l = r.len();
    if l == 0 {
        return 0.0;
    }
    let g = gens(s);
    let mut ranked: Vec<(usize, Vec<String>)> = g
        .into_iter()
        .map(|x| {
            let mut ed = wagner_fischer(&x, &r);
            if let Some(c) = d_max {
                ed = ed.min(c + 1);
            }
            (ed, x)
        })
        .collect();
    ranked.sort();
    // ceil(keep_tenths / 10 * d), at least 1
    let keep = ((keep_tenths * ranked.len()).div_ceil(10)).max(1);
    let mut best = 0.0;
    for (_, x) in ranked.iter().take(keep) {
        let mut m = 0.0;
        for i in 0..l {
            if i >= x.len() || x[i] != r[i] {
                let p = r.iter().filter(|t| **t == r[i]).count() as f64 / l as f64;
                m += 1.0 / p;
            }
        }
        if m > best {
            best = m;
        }
    }
    best
}

pub fn recurrent_rare_trigram(s: &TextSample) -> f64 {
    let r = suffix(s);
    let g = gens(s);
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut total = 0.0;
    for w in r.windows(3) {
        if seen.iter().any(|x| x.as_slice() == w) {
            continue;
        }
        seen.push(w.to_vec());
        let c = count_windows(&r, w);
        let a = g.iter().filter(|x| contains_window(x, w)).count();
        if a >= 2 {
            total += 1.0 / (1.0 + c as f64);
        }
    }
    total
}

pub fn internal_repetition(s: &TextSample) -> f64 {
    let g = gens(s);
    if g.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for x in &g {
        if x.is_empty() {
            continue;
        }
        let mut excess = 0usize;
        for n in 3..=5 {
            let mut seen: Vec<&[String]> = Vec::new();
            for w in x.windows(n) {
                if seen.contains(&w) {
                    continue;
                }
                seen.push(w);
                let c = count_windows(x, w);
                if c >= 2 {
                    excess += c - 1;
                }
            }
        }
        sum += excess as f64 / x.len() as f64;
    }
    sum / g.len() as f64
}

// ---------------------------------------------------------------- logit

pub fn row(s: &LogitSample, i: usize) -> Vec<f64> {
    s.row(i).iter().map(|&v| v as f64).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
    z.iter().map(|v| v - m - s.ln()).collect()
}

pub fn renyi(p: &[f64], alpha: f64) -> f64 {
    let mut s = 0.0;
    for &x in p {
        if x > 0.0 {
            s += x.powf(alpha);
        }
    }
    s.ln() / (1.0 - alpha)
}

pub fn shannon(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h
}

/// Indices sorted by value descending, ties to the lower index.
pub fn ranked(z: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of values >= the linearly interpolated (1 - top) quantile.
pub fn upper_tail_mean(v: &[f64], top: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (1.0 - top) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let cut = (s[lo] + (pos - lo as f64) * (s[hi] - s[lo])).min(s[hi]);
    let sel: Vec<f64> = v.iter().cloned().filter(|&x| x >= cut).collect();
    mean(&sel)
}

pub fn max_renyi(s: &LogitSample, alpha: f64, top_tenths: usize) -> f64 {
    let mut h: Vec<f64> = (0..s.len()).map(|i| renyi(&softmax(&row(s, i)), alpha)).collect();
    h.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = (top_tenths * h.len()).div_ceil(10).max(1);
    -mean(&h[..keep])
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Top-k indices of each noisy row, concatenated.
pub fn noisy_ranks(s: &LogitSample, seed: u64, sigma: f64, pass: usize, k: usize) -> Vec<u32> {
    let mut key = seed.to_le_bytes().to_vec();
    key.extend_from_slice(s.id().as_bytes());
    key.push(0xff);
    key.extend_from_slice(&(pass as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&key));
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut out = Vec::new();
    for i in 0..s.len() {
        let z: Vec<f64> = row(s, i)
            .into_iter()
            .map(|v| if sigma > 0.0 { v + normal.sample(&mut rng) } else { v })
            .collect();
        out.extend(ranked(&z).into_iter().take(k).map(|j| j as u32));
    }
    out
}

/// Discordant pairs among distinct shared values (first occurrences), over
/// C(k, 2).
pub fn rank_inversion(r1: &[u32], r2: &[u32], k: usize) -> f64 {
    let first = |r: &[u32], v: u32| r.iter().position(|&x| x == v);
    let mut shared: Vec<u32> = Vec::new();
    for &v in r1 {
        if !shared.contains(&v) && r2.contains(&v) {
            shared.push(v);
        }
    }
    let mut disc = 0usize;
    for a in 0..shared.len() {
        for b in a + 1..shared.len() {
            let (x, y) = (shared[a], shared[b]);
            let o1 = first(r1, x) < first(r1, y);
            let o2 = first(r2, x) < first(r2, y);
            if o1 != o2 {
                disc += 1;
            }
        }
    }
    disc as f64 / (k * (k - 1) / 2) as f64
}

pub fn rank_stability(s: &LogitSample, seed: u64, sigma: f64, passes: usize, k: usize) -> f64 {
    let v: Vec<Vec<u32>> = (0..passes).map(|p| noisy_ranks(s, seed, sigma, p, k)).collect();
    let mut total = 0.0;
    let mut n = 0;
    for a in 0..passes {
        for b in a + 1..passes {
            total += rank_inversion(&v[a], &v[b], k);
            n += 1;
        }
    }
    -(total / n as f64)
}

pub fn log_ratio_variance(s: &LogitSample, decay: f64, top: f64) -> f64 {
    let mut v = Vec::new();
    for i in 0..s.len() {
        let z = row(s, i);
        let t = s.true_tokens()[i] as usize;
        let lt = log_softmax(&z)[t];
        let alts: Vec<usize> = ranked(&z).into_iter().filter(|&j| j != t).take(5).collect();
        let restricted: Vec<f64> = alts.iter().map(|&j| z[j]).collect();
        let lr = log_softmax(&restricted);
        let gaps: Vec<f64> = lr.iter().map(|x| lt - x).collect();
        let m = mean(&gaps);
        let var = gaps.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / 5.0;
        v.push(var * (-(i as f64) / decay).exp());
    }
    upper_tail_mean(&v, top)
}

pub fn topk_confidence(s: &LogitSample, k: usize, top: f64) -> f64 {
    let c: Vec<f64> = (0..s.len())
        .map(|i| {
            let lp = log_softmax(&row(s, i));
            let mut sorted = lp.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            mean(&sorted[..k])
        })
        .collect();
    upper_tail_mean(&c, top)
}

pub fn neighbor_entropy_contrast(s: &LogitSample, dims: usize, k: usize) -> f64 {
    let l = s.len();
    let d = dims.min(s.vocab());
    let emb: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            let e: Vec<f64> = row(s, i)[..d].to_vec();
            let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; d]
            } else {
                e.iter().map(|x| x / n).collect()
            }
        })
        .collect();
    let mut total = 0.0;
    for i in 0..l {
        let mut sims: Vec<(f64, usize)> = Vec::new();
        for j in 0..l {
            if j != i {
                let c: f64 = (0..d).map(|x| emb[i][x] * emb[j][x]).sum();
                sims.push((c, j));
            }
        }
        sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let h: f64 = sims[..k]
            .iter()
            .map(|&(_, j)| shannon(&softmax(&row(s, j))))
            .sum::<f64>()
            / k as f64;
        let lt = log_softmax(&row(s, i))[s.true_tokens()[i] as usize];
        total += lt - h;
    }
    total / l as f64
}

// ---------------------------------------------------------------- metrics

/// Fraction of (member, non-member) pairs ordered correctly, ties 1/2.
pub fn pair_auc(scores: &[(f64, Membership)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(a, la) in scores {
        if la != Membership::Member {
            continue;
        }
        for &(b, lb) in scores {
            if lb != Membership::NonMember {
                continue;
            }
            den += 1.0;
            if a > b {
                num += 1.0;
            } else if a == b {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Best TPR over every rule "member iff score > t", t ranging over the
/// observed scores and both infinities, whose FPR is at most `target`.
pub fn sweep_tpr(scores: &[(f64, Membership)], target: f64) -> f64 {
    let pos = scores.iter().filter(|s| s.1 == Membership::Member).count();
    let neg = scores.len() - pos;
    let mut thresholds: Vec<f64> = scores.iter().map(|s| s.0).collect();
    thresholds.push(f64::INFINITY);
    thresholds.push(f64::NEG_INFINITY);
    let mut best = 0.0;
    for t in thresholds {
        let tp = scores.iter().filter(|s| s.1 == Membership::Member && s.0 > t).count();
        let fp = scores.iter().filter(|s| s.1 == Membership::NonMember && s.0 > t).count();
        let fpr = fp as f64 / neg as f64;
        let tpr = tp as f64 / pos as f64;
        if fpr <= target && tpr > best {
            best = tpr;
        }
    }
    best
}
