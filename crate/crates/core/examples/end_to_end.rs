//! Runs the whole pipeline on seeded synthetic fixtures and prints the
//! evaluation report.
//!
//! cargo run --release --example end_to_end [out_dir]

use std::path::PathBuf;

use ragvl::config::PipelineConfig;
use ragvl::demo::run_demo;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ragvl-demo"));
    let report = run_demo(&out, &PipelineConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("artifacts in {}", out.display());
    Ok(())
}
