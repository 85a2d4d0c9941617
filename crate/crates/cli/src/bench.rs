//! `fdx bench`: full scan against shortcuts on identical data.

use std::path::PathBuf;

use clap::Args;
use fdx_core::simharness::speed_comparison;

use crate::{to_json, write_file, CliError, CliResult};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of hypotheses.
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    /// Seed of the first run; run `r` uses `seed + r`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub runs: u64,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    if args.runs == 0 {
        return Err(CliError::Input("--runs must be at least 1".to_string()));
    }
    let mut reports = Vec::new();
    println!(
        "{:>6} {:>6} {:>6} {:>6} {:>14} {:>14} {:>9}",
        "seed", "K1", "K2", "K", "full scan (s)", "shortcut (s)", "speedup"
    );
    for r in 0..args.runs {
        let report = speed_comparison(args.m, args.seed.wrapping_add(r))?;
        println!(
            "{:>6} {:>6} {:>6} {:>6} {:>14.6} {:>14.6} {:>9.1}",
            report.seed,
            report.k1,
            report.k2,
            report.k,
            report.full_scan_seconds,
            report.shortcut_seconds,
            report.speedup
        );
        reports.push(report);
    }
    if let Some(path) = &args.out_json {
        write_file(path, &to_json(&reports)?)?;
    }
    if let Some(bad) = reports.iter().find(|r| !r.identical) {
        return Err(CliError::Mismatch(format!(
            "seed {}: full scan rejected {} hypotheses, shortcut procedure {}",
            bad.seed, bad.k_full_scan, bad.k
        )));
    }
    Ok(())
}
