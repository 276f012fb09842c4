//! Offline novelty-judge plugin: accepts unless a neighbor's idea and
//! justification embed within cosine 0.95 of the design's.

use std::process::ExitCode;

use mia_cli::read_stdin;
use mia_core::search::offline::OfflineJudge;
use mia_core::search::plugin::JudgeRequest;

fn run() -> Result<String, String> {
    let input = read_stdin().map_err(|e| format!("reading stdin: {e}"))?;
    let request: JudgeRequest =
        serde_json::from_str(input.trim()).map_err(|e| format!("bad request: {e}"))?;
    let verdict = OfflineJudge::default().verdict(&request.design, &request.neighbors);
    Ok(serde_json::to_string(&verdict).expect("verdicts serialize"))
}

fn main() -> ExitCode {
    match run() {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mia-offline-judge: {e}");
            ExitCode::FAILURE
        }
    }
}
