//! Explore/exploit search over candidate signal programs.
//!
//! The loop keeps an append-only experiment database with lineage, asks a
//! design generator for new or refined designs, runs the materialized
//! candidates under a wall-clock limit and stores the ones that score.

pub mod bm25;
pub mod db;
pub mod diversity;
pub mod embed;
pub mod engine;
pub mod exploiter;
pub mod explorer;
pub mod offline;
pub mod plugin;
pub mod runner;
pub mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::DataError;
use crate::evaluation::{EvalError, MetricsReport};

pub use db::ExperimentDb;
pub use engine::{main_loop, SearchOutcome, SeedCandidate};
pub use plugin::{DesignGenerator, NoveltyJudge};
pub use runner::{CandidateExecutor, ProcessExecutor, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExperimentId(pub u64);

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Seed,
    Explore,
    Exploit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Fail,
    Timeout,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Fail => "fail",
            Status::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub idea: String,
    pub design_justification: String,
    pub implementation_instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<ExperimentId>,
}

impl Design {
    pub fn new(idea: &str, justification: &str, instruction: &str) -> Self {
        Self {
            idea: idea.into(),
            design_justification: justification.into(),
            implementation_instruction: instruction.into(),
            parent_id: None,
        }
    }
}

/// A record before the database assigns its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDraft {
    pub design: Design,
    pub code_ref: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub analysis: String,
    pub iteration: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecord {
    pub id: ExperimentId,
    pub design: Design,
    pub code_ref: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub analysis: String,
    pub iteration: u64,
    pub mode: Mode,
}

impl ExperimentRecord {
    pub fn auc(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.auc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExploitMode {
    /// Cluster the top-K by root ancestor, then sample cluster and member.
    #[default]
    Cluster,
    /// Sample the top-K directly with weight |AUC - 0.5|.
    Flat,
}

impl std::str::FromStr for ExploitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster" => Ok(Self::Cluster),
            "flat" => Ok(Self::Flat),
            other => Err(format!("unknown exploit mode `{other}` (cluster|flat)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub timeout_seconds: u64,
    pub explore_period: usize,
    pub top_k_exploit: usize,
    pub explorer_seed_count: usize,
    pub explorer_refine_budget: usize,
    pub max_fix_rounds: usize,
    pub retrieval_k: usize,
    pub embed_dim: usize,
    pub rng_seed: u64,
    pub exploit_mode: ExploitMode,
    /// Stop with an error after this many design attempts. `None` means
    /// ten times the budget.
    pub max_attempts: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            timeout_seconds: 300,
            explore_period: 3,
            top_k_exploit: 10,
            explorer_seed_count: 3,
            explorer_refine_budget: 3,
            max_fix_rounds: 3,
            retrieval_k: 5,
            embed_dim: 256,
            rng_seed: 0,
            exploit_mode: ExploitMode::Cluster,
            max_attempts: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            ("budget", self.budget),
            ("timeout_seconds", self.timeout_seconds as usize),
            ("explore_period", self.explore_period),
            ("top_k_exploit", self.top_k_exploit),
            ("explorer_seed_count", self.explorer_seed_count),
            ("explorer_refine_budget", self.explorer_refine_budget),
            ("max_fix_rounds", self.max_fix_rounds),
            ("retrieval_k", self.retrieval_k),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(SearchError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.embed_dim < embed::MIN_DIM {
            return Err(SearchError::Config(format!(
                "embed_dim must be at least {}",
                embed::MIN_DIM
            )));
        }
        if self.max_attempts == Some(0) {
            return Err(SearchError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn attempt_cap(&self) -> usize {
        self.max_attempts
            .unwrap_or_else(|| self.budget.saturating_mul(10))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeAction {
    Accept,
    Revise,
    Redesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub action: JudgeAction,
    pub novelty_score: f64,
    #[serde(default)]
    pub suggestions: String,
}

impl JudgeVerdict {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.novelty_score) {
            return Err(format!("novelty_score {} outside [0, 1]", self.novelty_score));
        }
        if self.action == JudgeAction::Revise && self.suggestions.trim().is_empty() {
            return Err("revise verdict without suggestions".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("parent {parent} does not exist (next id is {next})")]
    DanglingParent { parent: ExperimentId, next: ExperimentId },
    #[error("journal {path}: {source}")]
    Journal {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("journal {path} line {line}: {source}")]
    JournalParse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("no scored record to exploit")]
    NoScoredRecords,
    #[error("{plugin} plugin failed during `{mode}`: {message}")]
    Plugin {
        plugin: String,
        mode: String,
        message: String,
    },
    #[error("gave up after {0} attempts without reaching the budget")]
    AttemptCap(usize),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl SearchError {
    /// Plugin and runtime failures, as opposed to bad input.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            SearchError::Plugin { .. } | SearchError::AttemptCap(_) | SearchError::Journal { .. }
        )
    }
}
