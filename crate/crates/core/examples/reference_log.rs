//! Write the synthetic reference game log as JSON Lines.
//!
//! `cargo run -p ctxrand --example reference_log -- reference.jsonl`

use std::path::PathBuf;

use ctxrand::fixtures::reference_game_log;
use ctxrand::io::{write_trial_log, LogFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "reference.jsonl".into()));
    let log = reference_game_log();
    write_trial_log(&path, &log, Some(LogFormat::Jsonl))?;
    println!("wrote {} rounds to {}", log.len(), path.display());
    Ok(())
}
