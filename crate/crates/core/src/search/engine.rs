//! The sequential explore/exploit main loop.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::db::{create_journal_file, ExperimentDb};
use super::exploiter::exploiter_step;
use super::explorer::explorer_step;
use super::plugin::{
    request_analysis, request_code, AnalyzeContext, CodegenContext, DesignGenerator, FixContext,
    GeneratorRequest, NoveltyJudge,
};
use super::runner::{CandidateExecutor, RunOutcome};
use super::{Design, ExperimentId, Mode, RecordDraft, SearchConfig, SearchError, Status};
use crate::datamodel::{Dataset, ScoredSample};
use crate::evaluation::MetricsReport;

/// A user-supplied baseline run before the search proper.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCandidate {
    pub design: Design,
    pub code_ref: String,
}

/// Where candidates are written and how attempts are logged.
#[derive(Debug, Clone, Default)]
pub struct LoopOptions {
    /// Directory handed to the generator for materialized candidates.
    pub workdir: PathBuf,
    /// Code references under this directory are stored relative to it.
    pub code_root: Option<PathBuf>,
    /// Every execution, successful or not, is appended here.
    pub run_journal: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchOutcome {
    /// Designs attempted, seed included.
    pub attempts: usize,
    /// Candidate executions, fixes included.
    pub executions: usize,
    pub inserted: Vec<ExperimentId>,
}

#[derive(Serialize)]
struct RunEntry<'a> {
    attempt: usize,
    iteration: usize,
    mode: Mode,
    fix_round: usize,
    code_ref: &'a str,
    status: Status,
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    inserted: Option<ExperimentId>,
}

struct RunLog(Option<BufWriter<std::fs::File>>, PathBuf);

impl RunLog {
    fn open(path: Option<&Path>) -> Result<Self, SearchError> {
        Ok(match path {
            Some(p) => RunLog(Some(BufWriter::new(create_journal_file(p)?)), p.to_path_buf()),
            None => RunLog(None, PathBuf::new()),
        })
    }

    fn append(&mut self, entry: &RunEntry<'_>) -> Result<(), SearchError> {
        let Some(out) = &mut self.0 else { return Ok(()) };
        let line = serde_json::to_string(entry).expect("run entries serialize");
        let err = |source| SearchError::Journal {
            path: self.1.display().to_string(),
            source,
        };
        writeln!(out, "{line}").map_err(err)?;
        out.flush().map_err(err)
    }
}

/// The mode the schedule assigns at a given database count.
pub fn scheduled_mode(count: usize, explore_period: usize, has_scored: bool) -> Mode {
    if count.is_multiple_of(explore_period) || !has_scored {
        Mode::Explore
    } else {
        Mode::Exploit
    }
}

struct Loop<'a> {
    config: &'a SearchConfig,
    data: &'a Dataset,
    generator: &'a mut dyn DesignGenerator,
    executor: &'a mut dyn CandidateExecutor,
    options: &'a LoopOptions,
    rng: ChaCha8Rng,
    log: RunLog,
    outcome: SearchOutcome,
}

impl Loop<'_> {
    fn stored_ref(&self, code_ref: &str) -> String {
        match &self.options.code_root {
            Some(root) => Path::new(code_ref)
                .strip_prefix(root)
                .map(|p| p.to_string_lossy().into_owned())
                .unwrap_or_else(|_| code_ref.to_string()),
            None => code_ref.to_string(),
        }
    }

    fn execute(&mut self, code_ref: &str) -> RunOutcome {
        self.outcome.executions += 1;
        let timeout = Duration::from_secs(self.config.timeout_seconds);
        self.executor.execute(code_ref, self.data, timeout)
    }

    fn metrics(&self, slot: &str, outcome: &RunOutcome) -> Result<MetricsReport, SearchError> {
        let values = outcome.scores.as_deref().unwrap_or(&[]);
        let scores: Vec<ScoredSample> = self
            .data
            .ids()
            .into_iter()
            .zip(self.data.labels())
            .zip(values)
            .map(|((id, label), &score)| ScoredSample {
                id: id.into(),
                score,
                label,
            })
            .collect();
        Ok(MetricsReport::from_scores(
            slot,
            Default::default(),
            &scores,
            false,
        )?)
    }

    /// Codegen (or the given code), execute, fix per the retry rule, and
    /// insert on success.
    fn attempt(
        &mut self,
        db: &mut ExperimentDb,
        design: Design,
        mode: Mode,
        seed_code: Option<&str>,
    ) -> Result<(), SearchError> {
        self.outcome.attempts += 1;
        let attempt = self.outcome.attempts;
        let iteration = db.len();
        let kind = self.data.kind();
        let workdir = self.options.workdir.display().to_string();
        let slot = format!("attempt-{attempt:04}");

        let mut code_ref = match seed_code {
            Some(code) => code.to_string(),
            None => request_code(
                self.generator,
                &GeneratorRequest::Codegen(CodegenContext {
                    nonce: self.rng.random(),
                    kind,
                    design: design.clone(),
                    workdir: workdir.clone(),
                    slot: slot.clone(),
                }),
            )?,
        };
        let mut run = self.execute(&code_ref);
        let mut fix_round = 0;
        // The seed is run as given; only generated candidates get fixes.
        let max_rounds = if seed_code.is_some() { 0 } else { self.config.max_fix_rounds };
        while run.status != Status::Ok && fix_round < max_rounds {
            self.log.append(&RunEntry {
                attempt,
                iteration,
                mode,
                fix_round,
                code_ref: &self.stored_ref(&code_ref),
                status: run.status,
                error: &run.error,
                inserted: None,
            })?;
            code_ref = request_code(
                self.generator,
                &GeneratorRequest::Fix(FixContext {
                    nonce: self.rng.random(),
                    kind,
                    design: design.clone(),
                    code_ref: code_ref.clone(),
                    status: run.status,
                    error: run.error.clone(),
                    fix_round,
                    workdir: workdir.clone(),
                    slot: format!("{slot}-fix{}", fix_round + 1),
                }),
            )?;
            fix_round += 1;
            if run.status == Status::Timeout {
                fix_round += 1;
            }
            run = self.execute(&code_ref);
        }

        let stored = self.stored_ref(&code_ref);
        let mut inserted = None;
        if run.status == Status::Ok {
            let metrics = self.metrics(&slot, &run)?;
            let analysis = request_analysis(
                self.generator,
                &GeneratorRequest::Analyze(AnalyzeContext {
                    nonce: self.rng.random(),
                    design: design.clone(),
                    code_ref: stored.clone(),
                    metrics: metrics.clone(),
                }),
            )?;
            let id = db.insert(RecordDraft {
                design,
                code_ref: stored.clone(),
                status: Status::Ok,
                metrics: Some(metrics),
                analysis,
                iteration: iteration as u64,
                mode,
            })?;
            self.outcome.inserted.push(id);
            inserted = Some(id);
        }
        self.log.append(&RunEntry {
            attempt,
            iteration,
            mode,
            fix_round,
            code_ref: &stored,
            status: run.status,
            error: &run.error,
            inserted,
        })
    }
}

/// Runs the search until `db` holds `config.budget` records.
///
/// The optional seed is executed once, without fixes. Each later iteration
/// explores when the record count is a multiple of `explore_period` (or
/// nothing has been scored yet) and exploits otherwise. Failed attempts
/// never reach `db`; they are only written to the run journal.
#[allow(clippy::too_many_arguments)]
pub fn main_loop(
    config: &SearchConfig,
    db: &mut ExperimentDb,
    data: &Dataset,
    generator: &mut dyn DesignGenerator,
    judge: &mut dyn NoveltyJudge,
    executor: &mut dyn CandidateExecutor,
    seed: Option<&SeedCandidate>,
    options: &LoopOptions,
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    let labels = data.labels();
    let members = labels.iter().filter(|l| l.is_member()).count();
    if members == 0 || members == labels.len() {
        return Err(crate::evaluation::EvalError::SingleClass {
            members,
            nonmembers: labels.len() - members,
        }
        .into());
    }
    let mut state = Loop {
        config,
        data,
        generator,
        executor,
        options,
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        log: RunLog::open(options.run_journal.as_deref())?,
        outcome: SearchOutcome::default(),
    };
    if let Some(seed) = seed {
        if db.len() < config.budget {
            let mut design = seed.design.clone();
            design.parent_id = None;
            state.attempt(db, design, Mode::Seed, Some(&seed.code_ref))?;
        }
    }
    let kind = data.kind();
    while db.len() < config.budget {
        if state.outcome.attempts >= config.attempt_cap() {
            return Err(SearchError::AttemptCap(state.outcome.attempts));
        }
        let has_scored = db.scored().next().is_some();
        let mode = scheduled_mode(db.len(), config.explore_period, has_scored);
        let design = match mode {
            Mode::Explore => {
                explorer_step(db, config, kind, state.generator, judge, &mut state.rng)?
            }
            _ => exploiter_step(db, config, kind, state.generator, &mut state.rng)?,
        };
        state.attempt(db, design, mode, None)?;
    }
    Ok(state.outcome)
}
