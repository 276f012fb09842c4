//! Pairwise similarity of design descriptions.

use serde::{Deserialize, Serialize};

use super::embed::{cosine, embed_text};
use super::{ExperimentRecord, SearchError};

const DESCRIPTION_KEYS: [&str; 4] = ["REPRESENTATION:", "COMPARISON:", "AGGREGATION:", "SCORE:"];

/// The four-line description inside an analysis, or the whole analysis
/// when those lines are absent.
pub fn description_of(analysis: &str) -> String {
    let lines: Vec<&str> = analysis
        .lines()
        .map(str::trim)
        .filter(|l| DESCRIPTION_KEYS.iter().any(|k| l.starts_with(k)))
        .collect();
    if lines.is_empty() {
        analysis.to_string()
    } else {
        lines.join("\n")
    }
}

/// Cosine similarity for every unordered pair `(i, j)`, `i < j`, in
/// row-major order.
pub fn pairwise_similarity(descriptions: &[String], dim: usize) -> Result<Vec<f64>, SearchError> {
    if descriptions.len() < 2 {
        return Err(SearchError::TooFewRecords {
            needed: 2,
            got: descriptions.len(),
        });
    }
    let vecs: Vec<Vec<f64>> = descriptions.iter().map(|d| embed_text(d, dim)).collect();
    let mut out = Vec::with_capacity(vecs.len() * (vecs.len() - 1) / 2);
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            out.push(cosine(&vecs[i], &vecs[j]));
        }
    }
    Ok(out)
}

pub fn pairwise_design_similarity(
    records: &[ExperimentRecord],
    dim: usize,
) -> Result<Vec<f64>, SearchError> {
    let descriptions: Vec<String> = records.iter().map(|r| description_of(&r.analysis)).collect();
    pairwise_similarity(&descriptions, dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub designs: usize,
    pub pairs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(designs: usize, sims: &[f64]) -> DiversitySummary {
    DiversitySummary {
        designs,
        pairs: sims.len(),
        mean: sims.iter().sum::<f64>() / sims.len() as f64,
        min: sims.iter().copied().fold(f64::INFINITY, f64::min),
        max: sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn description_extraction() {
        let a = "REPRESENTATION: x\nCOMPARISON: y\nAGGREGATION: z\nSCORE: w\nauc: 0.9";
        assert_eq!(description_of(a), "REPRESENTATION: x\nCOMPARISON: y\nAGGREGATION: z\nSCORE: w");
        assert_eq!(description_of("free text"), "free text");
    }

    #[test]
    fn identical_and_too_few() {
        let d = vec!["same words here".to_string(); 3];
        let s = pairwise_similarity(&d, 64).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!(pairwise_similarity(&d[..1], 64).is_err());
    }
}
