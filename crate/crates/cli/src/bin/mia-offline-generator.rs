//! Offline design-generator plugin: one JSON request on stdin, one JSON
//! response on stdout.

use std::process::ExitCode;

use mia_cli::{candidate_binary, read_stdin};
use mia_core::search::offline::OfflineGenerator;
use mia_core::search::plugin::GeneratorRequest;
use mia_core::search::DesignGenerator;

fn run() -> Result<String, String> {
    let input = read_stdin().map_err(|e| format!("reading stdin: {e}"))?;
    let request: GeneratorRequest =
        serde_json::from_str(input.trim()).map_err(|e| format!("bad request: {e}"))?;
    let mut generator = OfflineGenerator::new(candidate_binary());
    let response = generator.call(&request).map_err(|e| e.0)?;
    Ok(serde_json::to_string(&response).expect("responses serialize"))
}

fn main() -> ExitCode {
    match run() {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mia-offline-generator: {e}");
            ExitCode::FAILURE
        }
    }
}
