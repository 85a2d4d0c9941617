//! Simulation designs, per-trial metrics and the replicated experiment runner.
//!
//! Replication `r` draws its data from the child seed `derive_seed(master, r)`,
//! so a report depends only on the configuration and the master seed. Trials
//! run on a bounded rayon pool but results are collected in replication order
//! and aggregated sequentially, which keeps reports bit-identical for any
//! thread count.

mod counterexample;
mod generate;
mod presets;
mod speed;

pub use crate::numeric::derive_seed;
pub use counterexample::{counterexample_experiment, counterexample_trial, CounterexampleRow};
pub use generate::{
    gen_equicorr, gen_hierarchical, gen_hierarchical_with, gen_iid, ScenarioTag, SimulatedDataset,
};
pub use presets::{preset_configs, Preset};
pub use speed::{speed_comparison, SpeedReport};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, FdxError, Result};
use crate::level::{FdpTolerance, FdxLevel};
use crate::oracle::{exchangeable_lfdr, DependenceModel};
use crate::procedures::{
    bh, guo_romano_critical_value, guo_romano_critical_values, lehmann_romano, procedure1,
    procedure2, sc_adaptive, step_down, ProcedureOptions,
};
use crate::twogroup::{
    fit_empirical_null, fit_mixture_em, lfdr_empirical, lfdr_oracle, pvalue_from_z_sided,
    DensityMethod, EmpiricalNull, Gaussian, LfdrVector, MixtureFitOptions, PValueSide,
    TwoGroupModel, DEFAULT_CENTRAL_FRACTION,
};

/// Outcome of one procedure on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// `false rejections / max(rejections, 1)`.
    pub fdp: f64,
    pub exceeded: bool,
    pub tp: usize,
    pub rejections: usize,
}

/// FDP, exceedance and true-positive count of a rejection set.
pub fn compute_metrics(rejected: &[usize], theta: &[bool], gamma: f64) -> Result<TrialMetrics> {
    let gamma = FdpTolerance::new(gamma)?;
    let mut tp = 0;
    for &i in rejected {
        match theta.get(i) {
            Some(true) => tp += 1,
            Some(false) => {}
            None => {
                return domain(format!(
                    "rejected index {i} out of range for m = {}",
                    theta.len()
                ))
            }
        }
    }
    let rejections = rejected.len();
    let false_count = rejections - tp;
    Ok(TrialMetrics {
        fdp: false_count as f64 / rejections.max(1) as f64,
        exceeded: gamma.exceeded(false_count, rejections),
        tp,
        rejections,
    })
}

/// Data-generating design of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Iid {
        m: usize,
        pi: f64,
        mu: f64,
    },
    Equicorr {
        m: usize,
        pi: f64,
        mu: f64,
        rho: f64,
    },
    Hierarchical {
        m: usize,
        n_obs: usize,
    },
}

impl Scenario {
    pub fn m(&self) -> usize {
        match *self {
            Scenario::Iid { m, .. }
            | Scenario::Equicorr { m, .. }
            | Scenario::Hierarchical { m, .. } => m,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Scenario::Iid { m, pi, mu } => format!("iid(m={m},pi={pi},mu={mu})"),
            Scenario::Equicorr { m, pi, mu, rho } => {
                format!("equicorr(m={m},pi={pi},mu={mu},rho={rho})")
            }
            Scenario::Hierarchical { m, n_obs } => format!("hierarchical(m={m},n_obs={n_obs})"),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SimulatedDataset> {
        match *self {
            Scenario::Iid { m, pi, mu } => gen_iid(m, pi, mu, seed),
            Scenario::Equicorr { m, pi, mu, rho } => gen_equicorr(m, pi, mu, rho, seed),
            Scenario::Hierarchical { m, n_obs } => gen_hierarchical_with(m, n_obs, seed),
        }
    }

    /// p-value tail pointing at the alternative: one-sided when every
    /// non-null mean lies on the same side of zero.
    pub fn natural_side(&self) -> PValueSide {
        match *self {
            Scenario::Iid { mu, .. } | Scenario::Equicorr { mu, .. } if mu < 0.0 => {
                PValueSide::Lower
            }
            Scenario::Iid { mu, .. } | Scenario::Equicorr { mu, .. } if mu > 0.0 => {
                PValueSide::Upper
            }
            _ => PValueSide::TwoSided,
        }
    }

    fn has_oracle(&self) -> bool {
        match *self {
            Scenario::Iid { pi, .. } | Scenario::Equicorr { pi, .. } => pi < 1.0,
            Scenario::Hierarchical { .. } => false,
        }
    }

    /// lfdr under the true generating model.
    pub fn oracle_lfdr(&self, z: &[f64]) -> Result<LfdrVector> {
        match *self {
            Scenario::Iid { pi, mu, .. } => lfdr_oracle(z, &TwoGroupModel::standard(pi, mu)?),
            Scenario::Equicorr { pi, mu, rho, .. } => {
                exchangeable_lfdr(z, &DependenceModel::exchangeable(mu, rho, pi)?)
            }
            Scenario::Hierarchical { .. } => {
                domain("the hierarchical design has no closed-form oracle lfdr")
            }
        }
    }
}

/// Decision rules the runner can apply to each simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Procedure 2 on the true-model lfdr.
    Proc2Oracle,
    /// Procedure 1 (full scan) on the true-model lfdr.
    Proc1Oracle,
    /// Procedure 2 on lfdr from a Gaussian mixture fitted by EM.
    Proc2Em,
    /// Procedure 2 on lfdr from an empirical null and a kernel density.
    Proc2EmpiricalNull,
    /// Adaptive z-value FDR procedure on the true-model lfdr.
    ScOracle,
    /// Adaptive z-value FDR procedure on EM lfdr.
    ScEm,
    /// Benjamini-Hochberg on `N(0, 1)` p-values.
    Bh,
    /// Lehmann-Romano on `N(0, 1)` p-values.
    Lr,
    /// Guo-Romano on `N(0, 1)` p-values.
    Gr,
    /// Guo-Romano on p-values from the empirical null.
    GrEmpiricalNull,
}

impl Procedure {
    pub const ALL: [Procedure; 10] = [
        Procedure::Proc2Oracle,
        Procedure::Proc1Oracle,
        Procedure::Proc2Em,
        Procedure::Proc2EmpiricalNull,
        Procedure::ScOracle,
        Procedure::ScEm,
        Procedure::Bh,
        Procedure::Lr,
        Procedure::Gr,
        Procedure::GrEmpiricalNull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Proc2Oracle => "proc2_oracle",
            Procedure::Proc1Oracle => "proc1_oracle",
            Procedure::Proc2Em => "proc2_em",
            Procedure::Proc2EmpiricalNull => "proc2_empirical_null",
            Procedure::ScOracle => "sc_oracle",
            Procedure::ScEm => "sc_em",
            Procedure::Bh => "bh",
            Procedure::Lr => "lr",
            Procedure::Gr => "gr",
            Procedure::GrEmpiricalNull => "gr_empirical_null",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn needs_oracle(&self) -> bool {
        matches!(
            self,
            Procedure::Proc2Oracle | Procedure::Proc1Oracle | Procedure::ScOracle
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub procedures: Vec<Procedure>,
    pub level: FdxLevel,
    /// Level for the FDR procedures (BH and the adaptive z-value rule).
    pub alpha_fdr: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub threads: usize,
    /// Component counts tried by the mixture fit.
    pub em_candidates: Vec<usize>,
    /// Central window used by the empirical null.
    pub central_fraction: f64,
    /// Tail of the p-values fed to BH, LR and GR; `None` follows
    /// [`Scenario::natural_side`].
    pub pvalue_side: Option<PValueSide>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, procedures: Vec<Procedure>, level: FdxLevel) -> Self {
        Self {
            scenario,
            procedures,
            alpha_fdr: level.alpha(),
            level,
            reps: 1000,
            master_seed: 0,
            threads: 1,
            em_candidates: MixtureFitOptions::default().candidates,
            central_fraction: DEFAULT_CENTRAL_FRACTION,
            pvalue_side: None,
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return domain("need at least one replication");
        }
        if self.procedures.is_empty() {
            return domain("no procedures requested");
        }
        if !(self.alpha_fdr > 0.0 && self.alpha_fdr < 1.0) {
            return domain(format!(
                "FDR level must lie in (0, 1), got {}",
                self.alpha_fdr
            ));
        }
        if let Some(p) = self.procedures.iter().find(|p| p.needs_oracle()) {
            if !self.scenario.has_oracle() {
                return domain(format!(
                    "{} needs an oracle lfdr, which {} does not provide",
                    p.name(),
                    self.scenario.label()
                ));
            }
        }
        // Surface generator errors (bad m, pi, rho) before spawning work.
        self.scenario.generate(0).map(|_| ())
    }
}

/// Aggregated performance of one procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSummary {
    pub name: String,
    pub fdx: f64,
    pub fdx_se: f64,
    pub fdr: f64,
    pub fdr_se: f64,
    /// Mean true positives over mean non-null count; `None` without non-nulls.
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    pub mean_rejections: f64,
    /// Replications that entered the averages.
    pub reps: usize,
    pub exclusions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ProcedureSummary>,
    pub exclusions: usize,
    /// More than 1% of replications were excluded.
    pub invalid: bool,
    /// First few exclusion reasons, in replication order.
    pub exclusion_reasons: Vec<String>,
}

impl ExperimentReport {
    pub fn row(&self, procedure: Procedure) -> Option<&ProcedureSummary> {
        self.rows.iter().find(|r| r.name == procedure.name())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: String,
    name: &'a str,
    fdx: f64,
    fdx_se: f64,
    fdr: f64,
    fdr_se: f64,
    power: Option<f64>,
    power_se: Option<f64>,
    reps: usize,
    exclusions: usize,
}

/// One CSV row per procedure and report, with a leading scenario column.
pub fn write_reports_csv<W: Write>(reports: &[ExperimentReport], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for report in reports {
        for row in &report.rows {
            w.serialize(CsvRow {
                scenario: report.config.scenario.label(),
                name: &row.name,
                fdx: row.fdx,
                fdx_se: row.fdx_se,
                fdr: row.fdr,
                fdr_se: row.fdr_se,
                power: row.power,
                power_se: row.power_se,
                reps: row.reps,
                exclusions: row.exclusions,
            })?;
        }
    }
    w.flush()
}

struct TrialOutcome {
    non_null: usize,
    metrics: Vec<TrialMetrics>,
}

/// Run every requested procedure on `reps` independent datasets.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let m = config.scenario.m();
    let gr_table = if config
        .procedures
        .iter()
        .any(|p| matches!(p, Procedure::Gr | Procedure::GrEmpiricalNull))
    {
        guo_romano_critical_values(m, &config.level, m.min(512))
    } else {
        Vec::new()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| FdxError::Domain(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|r| run_trial(config, derive_seed(config.master_seed, r as u64), &gr_table))
            .collect()
    });

    let mut kept = Vec::with_capacity(outcomes.len());
    let mut reasons = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(t) => kept.push(t),
            Err(e) => {
                if reasons.len() < 10 {
                    reasons.push(e.to_string());
                }
            }
        }
    }
    let exclusions = config.reps - kept.len();
    let rows = config
        .procedures
        .iter()
        .enumerate()
        .map(|(j, p)| summarise(p.name(), &kept, j, exclusions))
        .collect();
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        exclusions,
        invalid: exclusions * 100 > config.reps,
        exclusion_reasons: reasons,
    })
}

fn summarise(name: &str, trials: &[TrialOutcome], j: usize, exclusions: usize) -> ProcedureSummary {
    let r = trials.len();
    let rf = r as f64;
    let mean_se = |xs: &[f64]| -> (f64, f64) {
        if xs.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let mean = crate::numeric::pairwise_sum(xs) / rf;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if r > 1 {
            crate::numeric::pairwise_sum(&dev) / (rf - 1.0)
        } else {
            0.0
        };
        (mean, (var / rf).sqrt())
    };
    let exceed: Vec<f64> = trials
        .iter()
        .map(|t| f64::from(u8::from(t.metrics[j].exceeded)))
        .collect();
    let fdp: Vec<f64> = trials.iter().map(|t| t.metrics[j].fdp).collect();
    let tp: Vec<f64> = trials.iter().map(|t| t.metrics[j].tp as f64).collect();
    let rej: Vec<f64> = trials
        .iter()
        .map(|t| t.metrics[j].rejections as f64)
        .collect();
    let nn: Vec<f64> = trials.iter().map(|t| t.non_null as f64).collect();
    let (fdx, fdx_se) = mean_se(&exceed);
    let (fdr, fdr_se) = mean_se(&fdp);
    let (mean_tp, _) = mean_se(&tp);
    let (mean_nn, _) = mean_se(&nn);
    let (power, power_se) = if mean_nn > 0.0 {
        let power = mean_tp / mean_nn;
        // Delta method for a ratio of means.
        let lin: Vec<f64> = tp.iter().zip(&nn).map(|(t, n)| t - power * n).collect();
        let (_, lin_se) = mean_se(&lin);
        (Some(power), Some(lin_se / mean_nn))
    } else {
        (None, None)
    };
    ProcedureSummary {
        name: name.to_string(),
        fdx,
        fdx_se,
        fdr,
        fdr_se,
        power,
        power_se,
        mean_rejections: mean_se(&rej).0,
        reps: r,
        exclusions,
    }
}

/// Lazily computed inputs shared by the procedures of one replication.
struct Trial<'a> {
    config: &'a ExperimentConfig,
    data: SimulatedDataset,
    seed: u64,
    oracle: Option<LfdrVector>,
    em: Option<LfdrVector>,
    empirical: Option<(EmpiricalNull, LfdrVector)>,
    pvalues: Option<Vec<f64>>,
}

impl Trial<'_> {
    fn oracle(&mut self) -> Result<&LfdrVector> {
        if self.oracle.is_none() {
            self.oracle = Some(self.config.scenario.oracle_lfdr(&self.data.z)?);
        }
        Ok(self.oracle.as_ref().expect("set above"))
    }

    fn em(&mut self) -> Result<&LfdrVector> {
        if self.em.is_none() {
            let opts = MixtureFitOptions {
                candidates: self.config.em_candidates.clone(),
                ..MixtureFitOptions::with_seed(derive_seed(self.seed, 1))
            };
            let fit = fit_mixture_em(&self.data.z, &opts)?;
            self.em = Some(lfdr_oracle(&self.data.z, &fit.model)?);
        }
        Ok(self.em.as_ref().expect("set above"))
    }

    fn empirical(&mut self) -> Result<&(EmpiricalNull, LfdrVector)> {
        if self.empirical.is_none() {
            let null = fit_empirical_null(&self.data.z, self.config.central_fraction)?;
            let lfdr = lfdr_empirical(&self.data.z, &null, &DensityMethod::default())?.lfdr;
            self.empirical = Some((null, lfdr));
        }
        Ok(self.empirical.as_ref().expect("set above"))
    }

    fn side(&self) -> PValueSide {
        self.config
            .pvalue_side
            .unwrap_or_else(|| self.config.scenario.natural_side())
    }

    fn pvalues(&mut self) -> Result<&[f64]> {
        if self.pvalues.is_none() {
            self.pvalues = Some(pvalue_from_z_sided(
                &self.data.z,
                &Gaussian::standard(),
                self.side(),
            )?);
        }
        Ok(self.pvalues.as_deref().expect("set above"))
    }
}

fn run_trial(config: &ExperimentConfig, seed: u64, gr_table: &[f64]) -> Result<TrialOutcome> {
    let data = config.scenario.generate(seed)?;
    let m = data.len();
    let level = config.level;
    let opts = ProcedureOptions::default();
    let gr = |p: &[f64]| {
        step_down(p, |i| {
            gr_table
                .get(i - 1)
                .copied()
                .unwrap_or_else(|| guo_romano_critical_value(m, i, &level))
        })
    };
    let mut trial = Trial {
        config,
        data,
        seed,
        oracle: None,
        em: None,
        empirical: None,
        pvalues: None,
    };
    let mut metrics = Vec::with_capacity(config.procedures.len());
    for p in &config.procedures {
        let rejected = match p {
            Procedure::Proc2Oracle => procedure2(trial.oracle()?, &level, &opts).rejected,
            Procedure::Proc1Oracle => procedure1(trial.oracle()?, &level, &opts).rejected,
            Procedure::Proc2Em => procedure2(trial.em()?, &level, &opts).rejected,
            Procedure::Proc2EmpiricalNull => {
                procedure2(&trial.empirical()?.1, &level, &opts).rejected
            }
            Procedure::ScOracle => sc_adaptive(trial.oracle()?, config.alpha_fdr)?,
            Procedure::ScEm => sc_adaptive(trial.em()?, config.alpha_fdr)?,
            Procedure::Bh => bh(trial.pvalues()?, config.alpha_fdr)?,
            Procedure::Lr => lehmann_romano(trial.pvalues()?, &level)?,
            Procedure::Gr => gr(trial.pvalues()?)?,
            Procedure::GrEmpiricalNull => {
                let null = trial.empirical()?.0.gaussian();
                gr(&pvalue_from_z_sided(&trial.data.z, &null, trial.side())?)?
            }
        };
        metrics.push(compute_metrics(
            &rejected,
            &trial.data.theta,
            level.gamma(),
        )?);
    }
    Ok(TrialOutcome {
        non_null: trial.data.non_null_count(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_examples() {
        let theta = [true, true, true, false, false];
        let empty = compute_metrics(&[], &theta, 0.2).unwrap();
        assert_eq!((empty.fdp, empty.exceeded), (0.0, false));
        let nulls = compute_metrics(&[3, 4], &theta, 0.2).unwrap();
        assert_eq!(nulls.fdp, 1.0);
        let mixed = compute_metrics(&[0, 1, 2, 3], &theta, 0.2).unwrap();
        assert_eq!((mixed.fdp, mixed.exceeded, mixed.tp), (0.25, true, 3));
        assert!(compute_metrics(&[9], &theta, 0.2).is_err());
    }

    #[test]
    fn boundary_fdp_equal_to_gamma_is_not_exceedance() {
        let theta = [true, true, true, false];
        let m = compute_metrics(&[0, 1, 2, 3], &theta, 0.25).unwrap();
        assert!(!m.exceeded);
    }

    fn small_config(reps: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            Scenario::Iid {
                m: 400,
                pi: 0.2,
                mu: -2.5,
            },
            vec![
                Procedure::Proc2Oracle,
                Procedure::Bh,
                Procedure::Gr,
                Procedure::Lr,
            ],
            FdxLevel::new(0.1, 0.05).unwrap(),
        )
        .with_reps(reps)
        .with_seed(17)
    }

    #[test]
    fn single_rep_report_equals_trial_metrics() {
        let cfg = small_config(1);
        let report = run_experiment(&cfg).unwrap();
        let data = cfg.scenario.generate(derive_seed(17, 0)).unwrap();
        let lfdr = cfg.scenario.oracle_lfdr(&data.z).unwrap();
        let rej = procedure2(&lfdr, &cfg.level, &Default::default()).rejected;
        let m = compute_metrics(&rej, &data.theta, 0.1).unwrap();
        let row = report.row(Procedure::Proc2Oracle).unwrap();
        assert_eq!(row.fdr, m.fdp);
        assert_eq!(row.fdx, f64::from(u8::from(m.exceeded)));
        assert_eq!(row.power, Some(m.tp as f64 / data.non_null_count() as f64));
        assert_eq!(row.fdx_se, 0.0);
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let a = run_experiment(&small_config(40).with_threads(1)).unwrap();
        let b = run_experiment(&small_config(40).with_threads(4)).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn oracle_procedures_need_an_oracle() {
        let cfg = ExperimentConfig::new(
            Scenario::Hierarchical { m: 500, n_obs: 1 },
            vec![Procedure::Proc2Oracle],
            FdxLevel::new(0.1, 0.05).unwrap(),
        );
        assert!(run_experiment(&cfg).is_err());
        assert!(run_experiment(&small_config(0)).is_err());
    }

    #[test]
    fn procedure_names_round_trip() {
        for p in Procedure::ALL {
            assert_eq!(Procedure::from_name(p.name()), Some(p));
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.name()));
        }
    }
}
