//! Helpers shared by the `mia` binaries.

use std::io::Read;
use std::path::PathBuf;

/// Environment override for the candidate binary used by generated wrappers.
pub const CANDIDATE_ENV: &str = "MIA_CANDIDATE_BIN";

/// Path of a binary installed next to the running executable.
pub fn sibling_binary(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap_or_else(|_| PathBuf::from(name));
    match exe.parent() {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

/// `MIA_CANDIDATE_BIN`, else `mia-candidate` beside the current executable.
pub fn candidate_binary() -> PathBuf {
    std::env::var_os(CANDIDATE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling_binary("mia-candidate"))
}

pub fn read_stdin() -> std::io::Result<String> {
    let mut buf = String::new();
    std::io::stdin().read_to_string(&mut buf)?;
    Ok(buf)
}
