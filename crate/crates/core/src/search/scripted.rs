//! Deterministic in-process plugins and executor for driving the loop in
//! tests. They record every request they receive.

use std::collections::VecDeque;
use std::time::Duration;

use super::plugin::{
    DesignGenerator, DesignReply, GeneratorRequest, GeneratorResponse, JudgeRequest, NoveltyJudge,
    PluginError,
};
use super::runner::{CandidateExecutor, RunOutcome};
use super::{JudgeAction, JudgeVerdict, Status};
use crate::datamodel::Dataset;

/// Returns numbered designs, code refs and analyses.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    pub requests: Vec<GeneratorRequest>,
    designs: usize,
    codes: usize,
}

impl ScriptedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, mode: &str) -> usize {
        self.requests.iter().filter(|r| r.mode() == mode).count()
    }
}

impl DesignGenerator for ScriptedGenerator {
    fn call(&mut self, request: &GeneratorRequest) -> Result<GeneratorResponse, PluginError> {
        self.requests.push(request.clone());
        Ok(match request {
            GeneratorRequest::Generate(_)
            | GeneratorRequest::Revise(_)
            | GeneratorRequest::Exploit(_) => {
                self.designs += 1;
                let n = self.designs;
                GeneratorResponse::Design(DesignReply {
                    idea: format!("design {n}"),
                    design_justification: format!("justification {n}"),
                    implementation_instruction: format!("instruction {n}"),
                })
            }
            GeneratorRequest::Codegen(_) => {
                self.codes += 1;
                GeneratorResponse::Code {
                    code_ref: format!("code-{}", self.codes),
                }
            }
            GeneratorRequest::Fix(ctx) => GeneratorResponse::Code {
                code_ref: format!("{}-fix", ctx.code_ref),
            },
            GeneratorRequest::Analyze(ctx) => GeneratorResponse::Analysis {
                analysis: format!("analysis of {}", ctx.code_ref),
            },
        })
    }
}

/// Replays a fixed list of actions, repeating the last one.
#[derive(Debug)]
pub struct ScriptedJudge {
    actions: Vec<JudgeAction>,
    pub suggestions: String,
    pub requests: Vec<JudgeRequest>,
}

impl ScriptedJudge {
    pub fn new(actions: Vec<JudgeAction>) -> Self {
        assert!(!actions.is_empty());
        Self {
            actions,
            suggestions: "try something else".into(),
            requests: Vec::new(),
        }
    }

    pub fn always(action: JudgeAction) -> Self {
        Self::new(vec![action])
    }
}

impl NoveltyJudge for ScriptedJudge {
    fn judge(&mut self, request: &JudgeRequest) -> Result<JudgeVerdict, PluginError> {
        let i = self.requests.len().min(self.actions.len() - 1);
        self.requests.push(request.clone());
        Ok(JudgeVerdict {
            action: self.actions[i],
            novelty_score: 0.5,
            suggestions: self.suggestions.clone(),
        })
    }
}

/// Produces scripted statuses; successful runs score each sample with
/// `score`.
pub struct ScriptedExecutor {
    script: VecDeque<Status>,
    pub default: Status,
    pub score: fn(&Dataset) -> Vec<f64>,
    pub calls: Vec<String>,
}

impl ScriptedExecutor {
    /// Plays `script` in order, then `Ok` forever.
    pub fn new(script: Vec<Status>) -> Self {
        Self {
            script: script.into(),
            default: Status::Ok,
            score: |d| vec![0.0; d.len()],
            calls: Vec::new(),
        }
    }

    pub fn always(status: Status) -> Self {
        let mut e = Self::new(Vec::new());
        e.default = status;
        e
    }
}

impl CandidateExecutor for ScriptedExecutor {
    fn execute(&mut self, code_ref: &str, data: &Dataset, _timeout: Duration) -> RunOutcome {
        self.calls.push(code_ref.to_string());
        match self.script.pop_front().unwrap_or(self.default) {
            Status::Ok => RunOutcome::ok((self.score)(data)),
            Status::Fail => RunOutcome::failed(Status::Fail, "scripted failure"),
            Status::Timeout => RunOutcome::failed(Status::Timeout, "scripted timeout"),
        }
    }
}
