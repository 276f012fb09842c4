//! Child-process supervision with a wall-clock limit, and the candidate
//! runner protocol built on it.
//!
//! Each child runs in its own process group so that a timeout kills the
//! whole tree, including anything a wrapper script spawned.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::Status;
use crate::datamodel::Dataset;

/// Lines of the error stream kept for diagnostics.
pub const STDERR_TAIL_LINES: usize = 20;

const POLL_INTERVAL: Duration = Duration::from_millis(5);
/// How long to wait for pipe readers after a kill.
const KILL_GRACE: Duration = Duration::from_millis(500);

#[derive(Debug, Clone)]
pub struct ProcessSpec<'a> {
    pub program: &'a Path,
    pub args: &'a [String],
    pub stdin: Vec<u8>,
    pub timeout: Duration,
    /// Run with an empty environment apart from `PATH`.
    pub clear_env: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitKind {
    /// Exit code, or `None` when killed by a signal.
    Exited(Option<i32>),
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub exit: ExitKind,
    pub stdout: Vec<u8>,
    pub stderr_tail: String,
    pub elapsed: Duration,
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; a stale or invalid group only yields ESRCH.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

fn tail_lines(reader: impl Read, keep: usize) -> String {
    let mut lines: VecDeque<String> = VecDeque::with_capacity(keep + 1);
    for line in BufReader::new(reader).split(b'\n') {
        let Ok(line) = line else { break };
        lines.push_back(String::from_utf8_lossy(&line).trim_end_matches('\r').to_string());
        if lines.len() > keep {
            lines.pop_front();
        }
    }
    Vec::from(lines).join("\n")
}

/// Runs `spec.program` to completion or until `spec.timeout` elapses,
/// feeding `spec.stdin` and capturing stdout plus the last lines of stderr.
/// Only spawn failures are errors.
pub fn run_process(spec: ProcessSpec<'_>) -> std::io::Result<ProcessOutput> {
    let mut cmd = Command::new(spec.program);
    cmd.args(spec.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if spec.clear_env {
        cmd.env_clear();
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }
    }
    let start = Instant::now();
    let deadline = start + spec.timeout;
    let mut child = cmd.spawn()?;
    let pgid = child.id();

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let input = spec.stdin;
    thread::spawn(move || {
        // a child that exits early closes the pipe; that is not our error
        let _ = stdin.write_all(&input);
    });
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let (out_tx, out_rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        let _ = out_tx.send(buf);
    });
    let stderr = child.stderr.take().expect("stderr is piped");
    let (err_tx, err_rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = err_tx.send(tail_lines(stderr, STDERR_TAIL_LINES));
    });

    let mut status: Option<ExitStatus> = None;
    while Instant::now() < deadline {
        if let Some(s) = child.try_wait()? {
            status = Some(s);
            break;
        }
        thread::sleep(POLL_INTERVAL);
    }

    // The child may have exited while a grandchild still holds the pipes.
    let remaining = deadline.saturating_duration_since(Instant::now());
    let mut stdout_buf = match status {
        Some(_) => out_rx.recv_timeout(remaining).ok(),
        None => None,
    };
    let timed_out = status.is_none() || stdout_buf.is_none();
    if timed_out {
        kill_group(pgid);
        let _ = child.kill();
        let _ = child.wait();
        if stdout_buf.is_none() {
            stdout_buf = out_rx.recv_timeout(KILL_GRACE).ok();
        }
    }
    let grace = if timed_out { KILL_GRACE } else { remaining.max(KILL_GRACE) };
    let stderr_tail = err_rx.recv_timeout(grace).unwrap_or_default();
    Ok(ProcessOutput {
        exit: if timed_out {
            ExitKind::TimedOut
        } else {
            ExitKind::Exited(status.and_then(|s| s.code()))
        },
        stdout: stdout_buf.unwrap_or_default(),
        stderr_tail,
        elapsed: start.elapsed(),
    })
}

/// Result of one candidate execution. `scores` is present iff `status` is ok.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: Status,
    pub scores: Option<Vec<f64>>,
    pub error: String,
}

impl RunOutcome {
    pub fn ok(scores: Vec<f64>) -> Self {
        Self {
            status: Status::Ok,
            scores: Some(scores),
            error: String::new(),
        }
    }

    pub fn failed(status: Status, error: impl Into<String>) -> Self {
        Self {
            status,
            scores: None,
            error: error.into(),
        }
    }
}

/// Something that can run a candidate over a dataset.
pub trait CandidateExecutor {
    fn execute(&mut self, code_ref: &str, data: &Dataset, timeout: Duration) -> RunOutcome;
}

/// Runs candidates as child processes via [`run_candidate`].
#[derive(Debug, Clone, Default)]
pub struct ProcessExecutor {
    /// Base for relative code references.
    pub base_dir: Option<PathBuf>,
}

impl CandidateExecutor for ProcessExecutor {
    fn execute(&mut self, code_ref: &str, data: &Dataset, timeout: Duration) -> RunOutcome {
        let path = match &self.base_dir {
            Some(base) if Path::new(code_ref).is_relative() => base.join(code_ref),
            _ => PathBuf::from(code_ref),
        };
        run_candidate(&path, data, timeout)
    }
}

#[derive(Serialize)]
struct TextRecord<'a> {
    id: &'a str,
    original_text: &'a str,
    prefix: &'a str,
    ground_truth_suffix: &'a str,
    suffix_generations: &'a [String],
}

#[derive(Serialize)]
struct LogitRecord<'a> {
    id: &'a str,
    logits: Vec<&'a [f32]>,
    true_tokens: &'a [u32],
}

/// Candidate input: one JSON object per sample, labels withheld.
pub fn candidate_input(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |line: String| {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    };
    match data {
        Dataset::Text(samples) => {
            for s in samples {
                push(
                    serde_json::to_string(&TextRecord {
                        id: &s.id,
                        original_text: &s.original_text,
                        prefix: &s.prefix,
                        ground_truth_suffix: &s.ground_truth_suffix,
                        suffix_generations: &s.suffix_generations,
                    })
                    .expect("strings serialize"),
                )
            }
        }
        Dataset::Logit(samples) => {
            for s in samples {
                push(
                    serde_json::to_string(&LogitRecord {
                        id: s.id(),
                        logits: s.rows().collect(),
                        true_tokens: s.true_tokens(),
                    })
                    .expect("finite floats serialize"),
                )
            }
        }
    }
    out
}

/// Parses exactly `expected` finite decimal floats, one per line. A final
/// newline is optional.
pub fn parse_scores(stdout: &[u8], expected: usize) -> Result<Vec<f64>, String> {
    let text = std::str::from_utf8(stdout).map_err(|_| "stdout is not UTF-8".to_string())?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = if body.is_empty() {
        Vec::new()
    } else {
        body.split('\n').collect()
    };
    if lines.len() != expected {
        return Err(format!(
            "expected {expected} scores (one per sample), got {} lines",
            lines.len()
        ));
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| format!("line {}: `{}` is not a number", i + 1, line.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("line {}: non-finite score {v}", i + 1))
            }
        })
        .collect()
}

fn with_tail(message: String, tail: &str) -> String {
    if tail.is_empty() {
        message
    } else {
        format!("{message}\nstderr (last {STDERR_TAIL_LINES} lines):\n{tail}")
    }
}

/// Runs one candidate over `data` with a clean environment.
pub fn run_candidate(program: &Path, data: &Dataset, timeout: Duration) -> RunOutcome {
    let output = match run_process(ProcessSpec {
        program,
        args: &[],
        stdin: candidate_input(data),
        timeout,
        clear_env: true,
    }) {
        Ok(o) => o,
        Err(e) => {
            return RunOutcome::failed(
                Status::Fail,
                format!("cannot start {}: {e}", program.display()),
            )
        }
    };
    match output.exit {
        ExitKind::TimedOut => RunOutcome::failed(
            Status::Timeout,
            with_tail(
                format!("killed after exceeding {} s", timeout.as_secs_f64()),
                &output.stderr_tail,
            ),
        ),
        ExitKind::Exited(Some(0)) => match parse_scores(&output.stdout, data.len()) {
            Ok(scores) => RunOutcome::ok(scores),
            Err(e) => RunOutcome::failed(Status::Fail, with_tail(e, &output.stderr_tail)),
        },
        ExitKind::Exited(code) => RunOutcome::failed(
            Status::Fail,
            with_tail(
                match code {
                    Some(c) => format!("exited with status {c}"),
                    None => "killed by a signal".to_string(),
                },
                &output.stderr_tail,
            ),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_parsing() {
        assert_eq!(parse_scores(b"0.5\n-1\n", 2).unwrap(), vec![0.5, -1.0]);
        assert_eq!(parse_scores(b"0.5\n-1", 2).unwrap(), vec![0.5, -1.0]);
        assert_eq!(parse_scores(b"", 0).unwrap(), Vec::<f64>::new());
        assert!(parse_scores(b"0.5\n", 2).unwrap_err().contains("expected 2"));
        assert!(parse_scores(b"abc\n", 1).is_err());
        assert!(parse_scores(b"NaN\n", 1).unwrap_err().contains("non-finite"));
        assert!(parse_scores(b"inf\n", 1).is_err());
    }

    #[test]
    fn captures_stderr_tail() {
        let script = "for i in $(seq 1 30); do echo line$i >&2; done; exit 3".to_string();
        let out = run_process(ProcessSpec {
            program: Path::new("/bin/sh"),
            args: &["-c".to_string(), script],
            stdin: Vec::new(),
            timeout: Duration::from_secs(10),
            clear_env: true,
        })
        .unwrap();
        assert_eq!(out.exit, ExitKind::Exited(Some(3)));
        let lines: Vec<&str> = out.stderr_tail.lines().collect();
        assert_eq!(lines.len(), 20);
        assert_eq!(lines[0], "line11");
        assert_eq!(lines[19], "line30");
    }

    #[test]
    fn kills_on_timeout_including_grandchildren() {
        let start = Instant::now();
        let out = run_process(ProcessSpec {
            program: Path::new("/bin/sh"),
            args: &["-c".to_string(), "sleep 30 & sleep 30".to_string()],
            stdin: Vec::new(),
            timeout: Duration::from_millis(300),
            clear_env: true,
        })
        .unwrap();
        assert_eq!(out.exit, ExitKind::TimedOut);
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn lingering_grandchild_holding_stdout_counts_as_timeout() {
        let start = Instant::now();
        let out = run_process(ProcessSpec {
            program: Path::new("/bin/sh"),
            args: &["-c".to_string(), "sleep 30 &".to_string()],
            stdin: Vec::new(),
            timeout: Duration::from_millis(300),
            clear_env: true,
        })
        .unwrap();
        assert_eq!(out.exit, ExitKind::TimedOut);
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn missing_program_fails() {
        let data = Dataset::text(Vec::new()).unwrap();
        let out = run_candidate(Path::new("/nonexistent/candidate"), &data, Duration::from_secs(1));
        assert_eq!(out.status, Status::Fail);
        assert!(out.error.contains("cannot start"));
    }
}
