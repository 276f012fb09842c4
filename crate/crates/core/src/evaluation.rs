//! ROC metrics over scored samples and whole-dataset signal evaluation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Dataset, ScoredSample};
use crate::signals::{Scorer, Signal, SignalError};

/// FPR targets reported by [`evaluate_signal`].
pub const REPORTED_FPRS: [f64; 2] = [0.01, 0.05];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metrics need at least one member and one non-member (got {members} and {nonmembers})")]
    SingleClass { members: usize, nonmembers: usize },
    #[error("sample `{id}` has a non-finite score ({score})")]
    NonFinite { id: String, score: f64 },
    #[error("fpr target {0} is outside [0, 1]")]
    BadTarget(f64),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Metrics for one signal over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub signal: String,
    pub auc: f64,
    pub tpr: BTreeMap<String, f64>,
    pub n_members: usize,
    pub n_nonmembers: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_auc: Option<f64>,
}

impl MetricsReport {
    /// Builds a report from precomputed scores. With `flip`, metrics are
    /// computed on negated scores and the unflipped AUC goes to `raw_auc`.
    pub fn from_scores(
        signal: &str,
        params: BTreeMap<String, String>,
        scores: &[ScoredSample],
        flip: bool,
    ) -> Result<Self, EvalError> {
        let (n_members, n_nonmembers) = class_counts(scores)?;
        let raw_auc = auc(scores)?;
        let oriented: Vec<ScoredSample> = if flip {
            scores
                .iter()
                .map(|s| ScoredSample {
                    score: -s.score,
                    ..s.clone()
                })
                .collect()
        } else {
            scores.to_vec()
        };
        let mut tpr = BTreeMap::new();
        for target in REPORTED_FPRS {
            tpr.insert(fpr_key(target), tpr_at_fpr(&oriented, target)?);
        }
        Ok(Self {
            signal: signal.into(),
            auc: if flip { auc(&oriented)? } else { raw_auc },
            tpr,
            n_members,
            n_nonmembers,
            params,
            flipped: flip,
            raw_auc: flip.then_some(raw_auc),
        })
    }

    pub fn tpr_at(&self, target: f64) -> Option<f64> {
        self.tpr.get(&fpr_key(target)).copied()
    }
}

/// JSON key for an FPR target, e.g. `0.01`.
pub fn fpr_key(target: f64) -> String {
    target.to_string()
}

fn class_counts(scores: &[ScoredSample]) -> Result<(usize, usize), EvalError> {
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(EvalError::NonFinite {
            id: s.id.clone(),
            score: s.score,
        });
    }
    let members = scores.iter().filter(|s| s.label.is_member()).count();
    let nonmembers = scores.len() - members;
    if members == 0 || nonmembers == 0 {
        return Err(EvalError::SingleClass {
            members,
            nonmembers,
        });
    }
    Ok((members, nonmembers))
}

/// Scores sorted descending, grouped by equal score, as
/// (members, non-members) per group.
fn descending_groups(scores: &[ScoredSample]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&ScoredSample> = scores.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for s in sorted {
        if last != Some(s.score) {
            groups.push((0, 0));
            last = Some(s.score);
        }
        let g = groups.last_mut().expect("group pushed above");
        if s.label.is_member() {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Mann-Whitney AUC from average ranks; ties count one half.
pub fn auc(scores: &[ScoredSample]) -> Result<f64, EvalError> {
    let (members, nonmembers) = class_counts(scores)?;
    let mut groups = descending_groups(scores);
    groups.reverse();
    let mut rank_sum = 0.0;
    let mut below = 0usize;
    for (m, n) in groups {
        let size = m + n;
        // ranks below+1 ..= below+size, averaged
        let avg_rank = below as f64 + (size as f64 + 1.0) / 2.0;
        rank_sum += m as f64 * avg_rank;
        below += size;
    }
    let m = members as f64;
    Ok((rank_sum - m * (m + 1.0) / 2.0) / (m * nonmembers as f64))
}

/// ROC points for thresholds `+inf` and then each distinct score from the
/// top down (predict member iff score > threshold is equivalent to taking
/// every group strictly above it). Starts at (0, 0), ends at (1, 1).
pub fn roc_curve(scores: &[ScoredSample]) -> Result<Vec<(f64, f64)>, EvalError> {
    let (members, nonmembers) = class_counts(scores)?;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (m, n) in descending_groups(scores) {
        tp += m;
        fp += n;
        points.push((fp as f64 / nonmembers as f64, tp as f64 / members as f64));
    }
    Ok(points)
}

/// Largest TPR over all thresholds whose FPR does not exceed `target`.
pub fn tpr_at_fpr(scores: &[ScoredSample], target: f64) -> Result<f64, EvalError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(EvalError::BadTarget(target));
    }
    Ok(roc_curve(scores)?
        .into_iter()
        .filter(|&(fpr, _)| fpr <= target)
        .map(|(_, tpr)| tpr)
        .fold(0.0, f64::max))
}

pub fn write_roc_csv(path: &Path, points: &[(f64, f64)]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "fpr,tpr").map_err(io)?;
    for (fpr, tpr) in points {
        writeln!(out, "{fpr},{tpr}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Scores every sample with `signal` and reports AUC and TPR at 1% and 5%.
/// A flipped signal also reports the unflipped AUC; the returned scores are
/// oriented.
pub fn evaluate_signal(
    data: &Dataset,
    signal: &Signal,
    jobs: usize,
) -> Result<(MetricsReport, Vec<ScoredSample>), EvalError> {
    let raw = Signal {
        flip: false,
        ..signal.clone()
    };
    let mut scores = Scorer::new(raw, data)?.score_dataset(data, jobs)?;
    let report = MetricsReport::from_scores(signal.name(), signal.params(), &scores, signal.flip)?;
    if signal.flip {
        scores.iter_mut().for_each(|s| s.score = -s.score);
    }
    Ok((report, scores))
}

/// Like [`evaluate_signal`], addressing the signal by name and raw params.
pub fn evaluate_by_name(
    data: &Dataset,
    name: &str,
    params: &BTreeMap<String, String>,
) -> Result<MetricsReport, EvalError> {
    let signal = Signal::from_parts(name, params)?;
    Ok(evaluate_signal(data, &signal, 1)?.0)
}
