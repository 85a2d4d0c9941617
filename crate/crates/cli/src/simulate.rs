//! `fdx simulate`: run simulation presets or a custom design.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fdx_core::simharness::{preset_configs, write_reports_csv, CounterexampleRow, Preset};
use fdx_core::{
    counterexample_experiment, run_experiment, ExperimentConfig, ExperimentReport, FdxLevel,
    PValueSide, Procedure, Scenario,
};
use serde::Serialize;

use crate::test_cmd::Side;
use crate::{to_json, write_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetArg {
    Table1,
    Table2,
    Table5,
    Table6,
    Table7,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Iid,
    Equicorr,
    Hierarchical,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: PresetArg,
    /// Replications (runs per correlation for table5); preset default when omitted.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; defaults to FDX_THREADS, then the number of cores.
    #[arg(long, env = "FDX_THREADS")]
    pub threads: Option<usize>,
    /// Data design (custom preset).
    #[arg(long, value_enum, default_value_t = ScenarioKind::Iid)]
    pub scenario: ScenarioKind,
    #[arg(long, default_value_t = 5000)]
    pub m: usize,
    #[arg(long, default_value_t = 0.2)]
    pub pi: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub mu: f64,
    /// Equicorrelation (equicorr scenario).
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Observations behind each z-value (hierarchical scenario).
    #[arg(long, default_value_t = 100)]
    pub n_obs: usize,
    /// Comma-separated procedure names (custom preset); all applicable when omitted.
    #[arg(long, value_delimiter = ',')]
    pub procedures: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// FDR level for bh and sc; defaults to --alpha.
    #[arg(long)]
    pub alpha_fdr: Option<f64>,
    /// Tail of the p-values; follows the sign of --mu when omitted.
    #[arg(long, value_enum)]
    pub pvalue_side: Option<Side>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

fn threads(args: &SimulateArgs) -> usize {
    args.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn custom_config(args: &SimulateArgs, threads: usize) -> CliResult<ExperimentConfig> {
    let scenario = match args.scenario {
        ScenarioKind::Iid => Scenario::Iid {
            m: args.m,
            pi: args.pi,
            mu: args.mu,
        },
        ScenarioKind::Equicorr => Scenario::Equicorr {
            m: args.m,
            pi: args.pi,
            mu: args.mu,
            rho: args.rho,
        },
        ScenarioKind::Hierarchical => Scenario::Hierarchical {
            m: args.m,
            n_obs: args.n_obs,
        },
    };
    let procedures = if args.procedures.is_empty() {
        let hierarchical = args.scenario == ScenarioKind::Hierarchical;
        Procedure::ALL
            .iter()
            .copied()
            .filter(|p| {
                !hierarchical
                    || matches!(
                        p,
                        Procedure::Proc2EmpiricalNull | Procedure::Gr | Procedure::GrEmpiricalNull
                    )
            })
            .collect()
    } else {
        args.procedures
            .iter()
            .map(|name| {
                Procedure::from_name(name.trim()).ok_or_else(|| {
                    let known: Vec<&str> = Procedure::ALL.iter().map(|p| p.name()).collect();
                    CliError::Input(format!(
                        "unknown procedure {name:?}; expected one of {}",
                        known.join(", ")
                    ))
                })
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    let level = FdxLevel::new(args.gamma, args.alpha)?;
    let mut cfg = ExperimentConfig::new(scenario, procedures, level)
        .with_reps(args.reps.unwrap_or(1000))
        .with_seed(args.seed)
        .with_threads(threads);
    cfg.alpha_fdr = args.alpha_fdr.unwrap_or(args.alpha);
    Ok(cfg)
}

#[derive(Serialize)]
struct CounterexampleOutput<'a> {
    rows: &'a [CounterexampleRow],
    config: &'a SimulateArgs,
}

fn run_counterexample(args: &SimulateArgs) -> CliResult<()> {
    let runs = args.reps.unwrap_or(Preset::Table5.default_reps());
    let rows = counterexample_experiment(&Preset::TABLE5_RHOS, runs, args.seed)?;
    println!(
        "{:>6} {:>8} {:>14} {:>9}",
        "rho", "runs", "contradictions", "percent"
    );
    for r in &rows {
        println!(
            "{:>6} {:>8} {:>14} {:>9.2}",
            r.rho, r.runs, r.contradictions, r.percent
        );
    }
    if let Some(path) = &args.out_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)
                .map_err(|e| CliError::Input(format!("cannot encode CSV: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Input(format!("cannot encode CSV: {e}")))?;
        write_file(path, &bytes)?;
    }
    if let Some(path) = &args.out_json {
        write_file(
            path,
            &to_json(&CounterexampleOutput {
                rows: &rows,
                config: args,
            })?,
        )?;
    }
    Ok(())
}

fn print_report(report: &ExperimentReport) {
    println!(
        "{}  ({} reps)",
        report.config.scenario.label(),
        report.config.reps
    );
    println!(
        "  {:<22} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>9}",
        "procedure", "fdx", "fdx_se", "fdr", "fdr_se", "power", "power_se", "mean_rej"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for row in &report.rows {
        println!(
            "  {:<22} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8} {:>8} {:>9.2}",
            row.name,
            row.fdx,
            row.fdx_se,
            row.fdr,
            row.fdr_se,
            opt(row.power),
            opt(row.power_se),
            row.mean_rejections
        );
    }
    if report.exclusions > 0 {
        eprintln!(
            "warning: {} replications excluded{}: {}",
            report.exclusions,
            if report.invalid { " (run invalid)" } else { "" },
            report.exclusion_reasons.join("; ")
        );
    }
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let threads = threads(args);
    let preset = match args.preset {
        PresetArg::Table1 => Some(Preset::Table1),
        PresetArg::Table2 => Some(Preset::Table2),
        PresetArg::Table5 => return run_counterexample(args),
        PresetArg::Table6 => Some(Preset::Table6),
        PresetArg::Table7 => Some(Preset::Table7),
        PresetArg::Custom => None,
    };
    let mut configs = match preset {
        Some(p) => preset_configs(p, args.reps, args.seed, threads),
        None => vec![custom_config(args, threads)?],
    };
    if let Some(side) = args.pvalue_side {
        let side = PValueSide::from(side);
        configs.iter_mut().for_each(|c| c.pvalue_side = Some(side));
    }
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let report = run_experiment(cfg)?;
        print_report(&report);
        reports.push(report);
    }
    if let Some(path) = &args.out_csv {
        let mut bytes = Vec::new();
        write_reports_csv(&reports, &mut bytes)
            .map_err(|e| CliError::Input(format!("cannot encode CSV: {e}")))?;
        write_file(path, &bytes)?;
    }
    if let Some(path) = &args.out_json {
        write_file(path, &to_json(&reports)?)?;
    }
    Ok(())
}
