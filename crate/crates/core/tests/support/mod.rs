#![allow(dead_code)]

pub mod oracles;
pub mod samples;
pub mod transcription;
