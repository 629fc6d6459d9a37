//! Generates a synthetic weather file and runs a desk-scale QLIF vs LIF
//! comparison on it.
//!
//! ```text
//! cargo run --release -p qlifcast --example synthetic_compare -- [out_dir] [seeds]
//! ```

use std::path::PathBuf;

use qlifcast::config::{ExperimentConfig, Phase};
use qlifcast::data::SplitRule;
use qlifcast::runner::cmd_compare;
use qlifcast::synthetic::write_weather_csv;

fn main() -> qlifcast::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/synthetic".into()));
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let csv = out.join("weather.csv");
    write_weather_csv(&csv, 4_000, 2006)?;
    let mut cfg = ExperimentConfig::for_phase(Phase::Phase1);
    cfg.seeds = (1..=seeds).collect();
    cfg.out_dir = out;
    cfg.dataset.csv = Some(csv);
    cfg.dataset.split = Some(SplitRule::Fixed { train: 2_000, test: 500 });

    let report = cmd_compare(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}
