//! Design-generator and novelty-judge plugins.
//!
//! Both speak JSON: one request in, one response out. In-process
//! implementations (tests, the offline plugins) implement the traits
//! directly; [`ProcessGenerator`] and [`ProcessJudge`] run an external
//! executable once per request.

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::runner::{run_process, ExitKind, ProcessSpec};
use super::{Design, ExperimentRecord, JudgeVerdict, SearchError, Status};
use crate::datamodel::DatasetKind;
use crate::evaluation::MetricsReport;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct PluginError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateContext {
    pub nonce: u64,
    pub kind: DatasetKind,
    pub seeds: Vec<ExperimentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviseContext {
    pub nonce: u64,
    pub kind: DatasetKind,
    pub design: Design,
    pub suggestions: String,
    pub neighbors: Vec<ExperimentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitContext {
    pub nonce: u64,
    pub kind: DatasetKind,
    pub parent: ExperimentRecord,
    /// Root first, parent excluded.
    pub ancestors: Vec<ExperimentRecord>,
    /// Existing children of `parent`.
    pub siblings: Vec<ExperimentRecord>,
    pub related: Vec<ExperimentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodegenContext {
    pub nonce: u64,
    pub kind: DatasetKind,
    pub design: Design,
    /// Directory the plugin may write the candidate into.
    pub workdir: String,
    /// Unique name for this attempt's artifact.
    pub slot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixContext {
    pub nonce: u64,
    pub kind: DatasetKind,
    pub design: Design,
    pub code_ref: String,
    pub status: Status,
    pub error: String,
    pub fix_round: usize,
    pub workdir: String,
    pub slot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeContext {
    pub nonce: u64,
    pub design: Design,
    pub code_ref: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "context", rename_all = "lowercase")]
pub enum GeneratorRequest {
    Generate(GenerateContext),
    Revise(ReviseContext),
    Exploit(ExploitContext),
    Codegen(CodegenContext),
    Fix(FixContext),
    Analyze(AnalyzeContext),
}

impl GeneratorRequest {
    pub fn mode(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::Revise(_) => "revise",
            Self::Exploit(_) => "exploit",
            Self::Codegen(_) => "codegen",
            Self::Fix(_) => "fix",
            Self::Analyze(_) => "analyze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReply {
    pub idea: String,
    pub design_justification: String,
    pub implementation_instruction: String,
}

impl From<DesignReply> for Design {
    fn from(r: DesignReply) -> Self {
        Design {
            idea: r.idea,
            design_justification: r.design_justification,
            implementation_instruction: r.implementation_instruction,
            parent_id: None,
        }
    }
}

impl From<&Design> for DesignReply {
    fn from(d: &Design) -> Self {
        DesignReply {
            idea: d.idea.clone(),
            design_justification: d.design_justification.clone(),
            implementation_instruction: d.implementation_instruction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorResponse {
    Design(DesignReply),
    Code { code_ref: String },
    Analysis { analysis: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub design: Design,
    pub neighbors: Vec<ExperimentRecord>,
}

pub trait DesignGenerator {
    fn call(&mut self, request: &GeneratorRequest) -> Result<GeneratorResponse, PluginError>;
}

pub trait NoveltyJudge {
    fn judge(&mut self, request: &JudgeRequest) -> Result<JudgeVerdict, PluginError>;
}

fn plugin_error(plugin: &str, mode: &str, message: impl Into<String>) -> SearchError {
    SearchError::Plugin {
        plugin: plugin.into(),
        mode: mode.into(),
        message: message.into(),
    }
}

fn call_generator(
    generator: &mut dyn DesignGenerator,
    request: &GeneratorRequest,
) -> Result<GeneratorResponse, SearchError> {
    generator
        .call(request)
        .map_err(|e| plugin_error("generator", request.mode(), e.0))
}

/// Sends a design-mode request and checks the reply is a design.
pub fn request_design(
    generator: &mut dyn DesignGenerator,
    request: &GeneratorRequest,
) -> Result<Design, SearchError> {
    match call_generator(generator, request)? {
        GeneratorResponse::Design(d) if !d.idea.trim().is_empty() => Ok(d.into()),
        GeneratorResponse::Design(_) => Err(plugin_error("generator", request.mode(), "empty idea")),
        other => Err(plugin_error(
            "generator",
            request.mode(),
            format!("expected a design, got {other:?}"),
        )),
    }
}

pub fn request_code(
    generator: &mut dyn DesignGenerator,
    request: &GeneratorRequest,
) -> Result<String, SearchError> {
    match call_generator(generator, request)? {
        GeneratorResponse::Code { code_ref } if !code_ref.is_empty() => Ok(code_ref),
        other => Err(plugin_error(
            "generator",
            request.mode(),
            format!("expected a code_ref, got {other:?}"),
        )),
    }
}

pub fn request_analysis(
    generator: &mut dyn DesignGenerator,
    request: &GeneratorRequest,
) -> Result<String, SearchError> {
    match call_generator(generator, request)? {
        GeneratorResponse::Analysis { analysis } => Ok(analysis),
        other => Err(plugin_error(
            "generator",
            request.mode(),
            format!("expected an analysis, got {other:?}"),
        )),
    }
}

pub fn request_verdict(
    judge: &mut dyn NoveltyJudge,
    request: &JudgeRequest,
) -> Result<JudgeVerdict, SearchError> {
    let verdict = judge
        .judge(request)
        .map_err(|e| plugin_error("judge", "judge", e.0))?;
    verdict
        .validate()
        .map_err(|m| plugin_error("judge", "judge", m))?;
    Ok(verdict)
}

/// An executable invoked once per request with the JSON on stdin.
#[derive(Debug, Clone)]
pub struct ProcessPlugin {
    program: PathBuf,
    args: Vec<String>,
    timeout: Duration,
}

impl ProcessPlugin {
    /// Fails unless `program` is an executable file.
    pub fn new(program: &Path, args: Vec<String>, timeout: Duration) -> Result<Self, PluginError> {
        let meta = std::fs::metadata(program)
            .map_err(|e| PluginError(format!("{}: {e}", program.display())))?;
        if !meta.is_file() || meta.permissions().mode() & 0o111 == 0 {
            return Err(PluginError(format!("{} is not executable", program.display())));
        }
        Ok(Self {
            program: program.to_path_buf(),
            args,
            timeout,
        })
    }

    pub fn program(&self) -> &Path {
        &self.program
    }

    /// Sends one request and returns the raw stdout.
    pub fn invoke(&self, request: &str) -> Result<String, PluginError> {
        let out = run_process(ProcessSpec {
            program: &self.program,
            args: &self.args,
            stdin: request.as_bytes().to_vec(),
            timeout: self.timeout,
            clear_env: false,
        })
        .map_err(|e| PluginError(format!("cannot start {}: {e}", self.program.display())))?;
        match out.exit {
            ExitKind::Exited(Some(0)) => String::from_utf8(out.stdout)
                .map_err(|_| PluginError("response is not UTF-8".into())),
            ExitKind::TimedOut => Err(PluginError(format!(
                "no response within {} s",
                self.timeout.as_secs_f64()
            ))),
            ExitKind::Exited(code) => Err(PluginError(format!(
                "exited with {code:?}: {}",
                out.stderr_tail
            ))),
        }
    }

    fn round_trip<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        request: &Req,
    ) -> Result<Resp, PluginError> {
        let line = serde_json::to_string(request).expect("requests serialize");
        let reply = self.invoke(&line)?;
        serde_json::from_str(reply.trim()).map_err(|e| PluginError(format!("bad response: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct ProcessGenerator(pub ProcessPlugin);

impl DesignGenerator for ProcessGenerator {
    fn call(&mut self, request: &GeneratorRequest) -> Result<GeneratorResponse, PluginError> {
        self.0.round_trip(request)
    }
}

#[derive(Debug, Clone)]
pub struct ProcessJudge(pub ProcessPlugin);

impl NoveltyJudge for ProcessJudge {
    fn judge(&mut self, request: &JudgeRequest) -> Result<JudgeVerdict, PluginError> {
        self.0.round_trip(request)
    }
}
