//! Token-level Levenshtein distance with a hard cap.

/// Levenshtein distance over token slices (unit insert/delete/substitute),
/// saturating at `d_max + 1`.
///
/// Every DP cell is clamped to `d_max + 1`, and the computation stops as
/// soon as a whole row exceeds `d_max`: path costs never decrease, so the
/// final cell cannot come back under the cap.
pub fn levenshtein_capped<T: PartialEq>(a: &[T], b: &[T], d_max: usize) -> usize {
    let cap = d_max.saturating_add(1);
    if a.len().abs_diff(b.len()) > d_max {
        return cap;
    }
    // Keep the DP row over the shorter sequence.
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).map(|j| j.min(cap)).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = (i + 1).min(cap);
        let mut row_min = cur[0];
        for (j, y) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(x != y);
            let cell = substitute.min(prev[j + 1] + 1).min(cur[j] + 1).min(cap);
            cur[j + 1] = cell;
            row_min = row_min.min(cell);
        }
        if row_min > d_max {
            return cap;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Exact Levenshtein distance (no cap).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    levenshtein_capped(a, b, a.len().max(b.len()))
}

/// Capped distance divided by the longer length, clamped to `[0, 1]`.
/// Two empty sequences are at distance 0. `d_max = None` means uncapped.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T], d_max: Option<usize>) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let dist = match d_max {
        Some(cap) => levenshtein_capped(a, b, cap),
        None => levenshtein(a, b),
    };
    (dist as f64 / longest as f64).clamp(0.0, 1.0)
}
