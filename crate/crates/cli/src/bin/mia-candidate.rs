//! Candidate program for the runner protocol: reads samples as JSON Lines
//! on stdin and prints one score per sample, computed by a registered
//! signal.

use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;

use mia_cli::read_stdin;
use mia_core::datamodel::{Dataset, LogitSample, Membership, TextSample};
use mia_core::signals::{Scorer, Signal};

#[derive(Parser)]
#[command(name = "mia-candidate", about = "Score stdin samples with one signal")]
struct Args {
    /// Signal spec, e.g. "geo_edit_distance d_max=10".
    #[arg(long)]
    spec: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRecord {
    id: String,
    original_text: String,
    prefix: String,
    ground_truth_suffix: String,
    suffix_generations: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitRecord {
    id: String,
    logits: Vec<Vec<f32>>,
    true_tokens: Vec<u32>,
}

// Labels are withheld from candidates; a placeholder fills the field.
const UNKNOWN: Membership = Membership::NonMember;

fn parse(input: &str) -> Result<Dataset, String> {
    let lines: Vec<(usize, &str)> = input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let is_logit = lines.first().is_some_and(|(_, l)| l.contains("\"logits\""));
    let err = |n: usize, e: &dyn std::fmt::Display| format!("line {}: {e}", n + 1);
    let data = if is_logit {
        let samples = lines
            .iter()
            .map(|&(n, l)| {
                let r: LogitRecord = serde_json::from_str(l).map_err(|e| err(n, &e))?;
                LogitSample::from_rows(&r.id, &r.logits, r.true_tokens, UNKNOWN).map_err(|e| err(n, &e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::logit(samples)
    } else {
        let samples = lines
            .iter()
            .map(|&(n, l)| {
                let r: TextRecord = serde_json::from_str(l).map_err(|e| err(n, &e))?;
                Ok(TextSample {
                    id: r.id,
                    label: UNKNOWN,
                    original_text: r.original_text,
                    prefix: r.prefix,
                    ground_truth_suffix: r.ground_truth_suffix,
                    suffix_generations: r.suffix_generations,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Dataset::text(samples)
    };
    data.map_err(|e| e.to_string())
}

fn run(args: Args) -> Result<(), String> {
    let signal: Signal = args.spec.parse().map_err(|e| format!("{e}"))?;
    let input = read_stdin().map_err(|e| format!("reading stdin: {e}"))?;
    let data = parse(&input)?;
    if data.is_empty() {
        return Ok(());
    }
    let scorer = Scorer::new(signal, &data).map_err(|e| e.to_string())?;
    let scores = scorer.score_dataset(&data, 1).map_err(|e| e.to_string())?;
    let mut out = BufWriter::new(std::io::stdout().lock());
    for s in scores {
        writeln!(out, "{}", s.score).map_err(|e| e.to_string())?;
    }
    out.flush().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mia-candidate: {e}");
            ExitCode::FAILURE
        }
    }
}
