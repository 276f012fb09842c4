//! Named signal registry: parsing `name key=value ...` specs and scoring
//! whole datasets with them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::datamodel::{Dataset, DatasetKind, LogitSample, ScoredSample, TextSample};
use crate::logit_signals::{self as ls, LogitSignalError, NoiseSpec};
use crate::text_signals::{self as ts, TrigramFreqTable};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("signal `{signal}` has no parameter `{param}`")]
    UnknownParam { signal: String, param: String },
    #[error("bad value `{value}` for parameter `{param}`: {reason}")]
    BadValue {
        param: String,
        value: String,
        reason: String,
    },
    #[error("malformed parameter `{0}`, expected key=value")]
    MalformedParam(String),
    #[error("empty signal spec")]
    Empty,
    #[error("signal `{signal}` needs a {expected} dataset, got {found}")]
    KindMismatch {
        signal: String,
        expected: DatasetKind,
        found: DatasetKind,
    },
    #[error("sample `{id}`: {source}")]
    Logit {
        id: String,
        #[source]
        source: LogitSignalError,
    },
    #[error("sample `{id}` produced a non-finite score ({score})")]
    NonFinite { id: String, score: f64 },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Every registered signal name, text signals first.
pub const SIGNAL_NAMES: [&str; 12] = [
    "max_coverage",
    "geo_edit_distance",
    "rare_trigram_agg",
    "rarity_longest_match",
    "inv_freq_mismatch",
    "recurrent_rare_trigram",
    "internal_repetition",
    "max_renyi",
    "rank_stability",
    "log_ratio_variance",
    "topk_confidence",
    "neighbor_entropy_contrast",
];

/// A signal family together with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    MaxCoverage { order: usize },
    GeoEditDistance { d_max: usize },
    RareTrigramAgg,
    RarityLongestMatch { d_max: Option<usize> },
    InvFreqMismatch { d_max: Option<usize>, keep_fraction: f64 },
    RecurrentRareTrigram,
    InternalRepetition,
    MaxRenyi { alpha: f64, top_fraction: f64 },
    RankStability { passes: usize, sigma: f64, seed: u64, k: usize },
    LogRatioVariance { decay_scale: f64, top_fraction: f64 },
    TopkConfidence { k: usize, top_fraction: f64 },
    NeighborEntropyContrast { embed_dims: usize, k: usize },
}

fn parse_value<T: FromStr>(param: &str, value: &str) -> Result<T, SignalError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| SignalError::BadValue {
        param: param.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_cap(param: &str, value: &str) -> Result<Option<usize>, SignalError> {
    if value == "none" {
        return Ok(None);
    }
    let cap: usize = parse_value(param, value)?;
    if cap == 0 {
        return Err(SignalError::BadValue {
            param: param.into(),
            value: value.into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(Some(cap))
}

fn cap_string(cap: Option<usize>) -> String {
    cap.map_or_else(|| "none".into(), |c| c.to_string())
}

impl SignalSpec {
    /// Default parameters for a registered name.
    pub fn default_for(name: &str) -> Result<Self, SignalError> {
        Ok(match name {
            "max_coverage" => Self::MaxCoverage {
                order: ts::DEFAULT_COVERAGE_ORDER,
            },
            "geo_edit_distance" => Self::GeoEditDistance {
                d_max: ts::DEFAULT_EDIT_CAP,
            },
            "rare_trigram_agg" => Self::RareTrigramAgg,
            "rarity_longest_match" => Self::RarityLongestMatch { d_max: None },
            "inv_freq_mismatch" => Self::InvFreqMismatch {
                d_max: None,
                keep_fraction: ts::DEFAULT_KEEP_FRACTION,
            },
            "recurrent_rare_trigram" => Self::RecurrentRareTrigram,
            "internal_repetition" => Self::InternalRepetition,
            "max_renyi" => Self::MaxRenyi {
                alpha: ls::DEFAULT_RENYI_ALPHA,
                top_fraction: ls::DEFAULT_RENYI_TOP_FRACTION,
            },
            "rank_stability" => Self::RankStability {
                passes: ls::DEFAULT_NOISE_PASSES,
                sigma: ls::DEFAULT_NOISE_SIGMA,
                seed: 0,
                k: ls::DEFAULT_RANK_K,
            },
            "log_ratio_variance" => Self::LogRatioVariance {
                decay_scale: ls::DEFAULT_DECAY_SCALE,
                top_fraction: ls::DEFAULT_VARIANCE_TOP_FRACTION,
            },
            "topk_confidence" => Self::TopkConfidence {
                k: ls::DEFAULT_CONFIDENCE_K,
                top_fraction: ls::DEFAULT_CONFIDENCE_TOP_FRACTION,
            },
            "neighbor_entropy_contrast" => Self::NeighborEntropyContrast {
                embed_dims: ls::DEFAULT_EMBED_DIMS,
                k: ls::DEFAULT_NEIGHBORS,
            },
            other => return Err(SignalError::UnknownSignal(other.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::MaxCoverage { .. } => "max_coverage",
            Self::GeoEditDistance { .. } => "geo_edit_distance",
            Self::RareTrigramAgg => "rare_trigram_agg",
            Self::RarityLongestMatch { .. } => "rarity_longest_match",
            Self::InvFreqMismatch { .. } => "inv_freq_mismatch",
            Self::RecurrentRareTrigram => "recurrent_rare_trigram",
            Self::InternalRepetition => "internal_repetition",
            Self::MaxRenyi { .. } => "max_renyi",
            Self::RankStability { .. } => "rank_stability",
            Self::LogRatioVariance { .. } => "log_ratio_variance",
            Self::TopkConfidence { .. } => "topk_confidence",
            Self::NeighborEntropyContrast { .. } => "neighbor_entropy_contrast",
        }
    }

    pub fn kind(&self) -> DatasetKind {
        match self {
            Self::MaxCoverage { .. }
            | Self::GeoEditDistance { .. }
            | Self::RareTrigramAgg
            | Self::RarityLongestMatch { .. }
            | Self::InvFreqMismatch { .. }
            | Self::RecurrentRareTrigram
            | Self::InternalRepetition => DatasetKind::Text,
            _ => DatasetKind::Logit,
        }
    }

    /// Parameters in canonical order, formatted as they would be parsed.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        match *self {
            Self::MaxCoverage { order } => vec![("order", order.to_string())],
            Self::GeoEditDistance { d_max } => vec![("d_max", d_max.to_string())],
            Self::RarityLongestMatch { d_max } => vec![("d_max", cap_string(d_max))],
            Self::InvFreqMismatch {
                d_max,
                keep_fraction,
            } => vec![
                ("d_max", cap_string(d_max)),
                ("keep_fraction", keep_fraction.to_string()),
            ],
            Self::RareTrigramAgg | Self::RecurrentRareTrigram | Self::InternalRepetition => {
                Vec::new()
            }
            Self::MaxRenyi {
                alpha,
                top_fraction,
            } => vec![
                ("alpha", alpha.to_string()),
                ("top_fraction", top_fraction.to_string()),
            ],
            Self::RankStability {
                passes,
                sigma,
                seed,
                k,
            } => vec![
                ("passes", passes.to_string()),
                ("sigma", sigma.to_string()),
                ("seed", seed.to_string()),
                ("k", k.to_string()),
            ],
            Self::LogRatioVariance {
                decay_scale,
                top_fraction,
            } => vec![
                ("decay_scale", decay_scale.to_string()),
                ("top_fraction", top_fraction.to_string()),
            ],
            Self::TopkConfidence { k, top_fraction } => vec![
                ("k", k.to_string()),
                ("top_fraction", top_fraction.to_string()),
            ],
            Self::NeighborEntropyContrast { embed_dims, k } => vec![
                ("embed_dims", embed_dims.to_string()),
                ("k", k.to_string()),
            ],
        }
    }

    /// Overrides one parameter. Range checks happen at scoring time.
    pub fn set(&mut self, param: &str, value: &str) -> Result<(), SignalError> {
        let name = self.name();
        let unknown = || SignalError::UnknownParam {
            signal: name.into(),
            param: param.into(),
        };
        match (self, param) {
            (Self::MaxCoverage { order }, "order") => *order = parse_value(param, value)?,
            (Self::GeoEditDistance { d_max }, "d_max") => {
                *d_max = parse_cap(param, value)?.ok_or_else(|| SignalError::BadValue {
                    param: param.into(),
                    value: value.into(),
                    reason: "this signal requires a cap".into(),
                })?
            }
            (Self::RarityLongestMatch { d_max }, "d_max")
            | (Self::InvFreqMismatch { d_max, .. }, "d_max") => *d_max = parse_cap(param, value)?,
            (Self::InvFreqMismatch { keep_fraction, .. }, "keep_fraction") => {
                *keep_fraction = parse_value(param, value)?
            }
            (Self::MaxRenyi { alpha, .. }, "alpha") => *alpha = parse_value(param, value)?,
            (Self::MaxRenyi { top_fraction, .. }, "top_fraction")
            | (Self::LogRatioVariance { top_fraction, .. }, "top_fraction")
            | (Self::TopkConfidence { top_fraction, .. }, "top_fraction") => {
                *top_fraction = parse_value(param, value)?
            }
            (Self::RankStability { passes, .. }, "passes") => *passes = parse_value(param, value)?,
            (Self::RankStability { sigma, .. }, "sigma") => *sigma = parse_value(param, value)?,
            (Self::RankStability { seed, .. }, "seed") => *seed = parse_value(param, value)?,
            (Self::RankStability { k, .. }, "k")
            | (Self::TopkConfidence { k, .. }, "k")
            | (Self::NeighborEntropyContrast { k, .. }, "k") => *k = parse_value(param, value)?,
            (Self::LogRatioVariance { decay_scale, .. }, "decay_scale") => {
                *decay_scale = parse_value(param, value)?
            }
            (Self::NeighborEntropyContrast { embed_dims, .. }, "embed_dims") => {
                *embed_dims = parse_value(param, value)?
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }
}

/// A signal plus an optional sign flip.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub spec: SignalSpec,
    pub flip: bool,
}

impl Signal {
    pub fn new(spec: SignalSpec) -> Self {
        Self { spec, flip: false }
    }

    pub fn from_parts(name: &str, params: &BTreeMap<String, String>) -> Result<Self, SignalError> {
        let mut signal = Self::new(SignalSpec::default_for(name)?);
        for (key, value) in params {
            if key == "flip" {
                signal.flip = parse_value(key, value)?;
            } else {
                signal.spec.set(key, value)?;
            }
        }
        Ok(signal)
    }

    pub fn name(&self) -> &'static str {
        self.spec.name()
    }

    /// All parameters, including `flip` when set.
    pub fn params(&self) -> BTreeMap<String, String> {
        let mut map: BTreeMap<String, String> = self
            .spec
            .params()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        if self.flip {
            map.insert("flip".into(), "true".into());
        }
        map
    }
}

impl FromStr for Signal {
    type Err = SignalError;

    /// Parses `name key=value ...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let name = parts.next().ok_or(SignalError::Empty)?;
        let mut params = BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| SignalError::MalformedParam(part.into()))?;
            params.insert(k.to_string(), v.to_string());
        }
        Self::from_parts(name, &params)
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for (k, v) in self.spec.params() {
            write!(f, " {k}={v}")?;
        }
        if self.flip {
            f.write_str(" flip=true")?;
        }
        Ok(())
    }
}

/// A signal bound to a dataset, holding any dataset-wide state it needs.
#[derive(Debug)]
pub struct Scorer {
    signal: Signal,
    trigrams: Option<TrigramFreqTable>,
}

impl Scorer {
    /// Checks the dataset kind and builds dataset-wide tables. The
    /// rare-trigram table is counted over every generation in `data`.
    pub fn new(signal: Signal, data: &Dataset) -> Result<Self, SignalError> {
        if signal.spec.kind() != data.kind() {
            return Err(SignalError::KindMismatch {
                signal: signal.name().into(),
                expected: signal.spec.kind(),
                found: data.kind(),
            });
        }
        let trigrams = match (&signal.spec, data) {
            (SignalSpec::RareTrigramAgg, Dataset::Text(samples)) => {
                Some(ts::trigram_table_from_generations(samples))
            }
            _ => None,
        };
        Ok(Self { signal, trigrams })
    }

    /// Uses a caller-supplied reference table for `rare_trigram_agg`.
    pub fn with_trigram_table(signal: Signal, table: TrigramFreqTable) -> Self {
        Self {
            signal,
            trigrams: Some(table),
        }
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    fn orient(&self, raw: f64) -> f64 {
        if self.signal.flip {
            -raw
        } else {
            raw
        }
    }

    pub fn score_text(&self, sample: &TextSample) -> Result<f64, SignalError> {
        let raw = match &self.signal.spec {
            SignalSpec::MaxCoverage { order } => ts::signal_max_coverage(sample, *order),
            SignalSpec::GeoEditDistance { d_max } => {
                ts::signal_geometric_edit_distance(sample, *d_max)
            }
            SignalSpec::RareTrigramAgg => {
                let empty = TrigramFreqTable::new();
                ts::signal_rare_trigram_aggregation(sample, self.trigrams.as_ref().unwrap_or(&empty))
            }
            SignalSpec::RarityLongestMatch { d_max } => {
                ts::signal_rarity_weighted_longest_match(sample, *d_max)
            }
            SignalSpec::InvFreqMismatch {
                d_max,
                keep_fraction,
            } => {
                if !(*keep_fraction > 0.0 && *keep_fraction <= 1.0) {
                    return Err(SignalError::BadValue {
                        param: "keep_fraction".into(),
                        value: keep_fraction.to_string(),
                        reason: "must be in (0, 1]".into(),
                    });
                }
                ts::signal_inverse_frequency_mismatch(sample, *d_max, *keep_fraction)
            }
            SignalSpec::RecurrentRareTrigram => ts::signal_recurrent_rare_trigram(sample),
            SignalSpec::InternalRepetition => ts::signal_internal_repetition(sample),
            _ => {
                return Err(SignalError::KindMismatch {
                    signal: self.signal.name().into(),
                    expected: DatasetKind::Logit,
                    found: DatasetKind::Text,
                })
            }
        };
        self.finish(&sample.id, raw)
    }

    pub fn score_logit(&self, sample: &LogitSample) -> Result<f64, SignalError> {
        let raw = match self.signal.spec {
            SignalSpec::MaxRenyi {
                alpha,
                top_fraction,
            } => ls::signal_max_renyi(sample, alpha, top_fraction),
            SignalSpec::RankStability {
                passes,
                sigma,
                seed,
                k,
            } => ls::signal_rank_stability(sample, &NoiseSpec { passes, sigma, seed }, k),
            SignalSpec::LogRatioVariance {
                decay_scale,
                top_fraction,
            } => ls::signal_log_ratio_variance(sample, decay_scale, top_fraction),
            SignalSpec::TopkConfidence { k, top_fraction } => {
                ls::signal_topk_confidence(sample, k, top_fraction)
            }
            SignalSpec::NeighborEntropyContrast { embed_dims, k } => {
                ls::signal_neighbor_entropy_contrast(sample, embed_dims, k)
            }
            _ => {
                return Err(SignalError::KindMismatch {
                    signal: self.signal.name().into(),
                    expected: DatasetKind::Text,
                    found: DatasetKind::Logit,
                })
            }
        }
        .map_err(|source| SignalError::Logit {
            id: sample.id().into(),
            source,
        })?;
        self.finish(sample.id(), raw)
    }

    fn finish(&self, id: &str, raw: f64) -> Result<f64, SignalError> {
        if raw.is_finite() {
            Ok(self.orient(raw))
        } else {
            Err(SignalError::NonFinite {
                id: id.into(),
                score: raw,
            })
        }
    }

    /// Scores every sample in order on a pool of `jobs` threads. Results do
    /// not depend on `jobs`.
    pub fn score_dataset(&self, data: &Dataset, jobs: usize) -> Result<Vec<ScoredSample>, SignalError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| SignalError::Pool(e.to_string()))?;
        pool.install(|| match data {
            Dataset::Text(samples) => samples
                .par_iter()
                .map(|s| {
                    Ok(ScoredSample {
                        id: s.id.clone(),
                        score: self.score_text(s)?,
                        label: s.label,
                    })
                })
                .collect(),
            Dataset::Logit(samples) => samples
                .par_iter()
                .map(|s| {
                    Ok(ScoredSample {
                        id: s.id().into(),
                        score: self.score_logit(s)?,
                        label: s.label(),
                    })
                })
                .collect(),
        })
    }
}
