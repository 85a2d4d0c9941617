//! Experiment grids for the published simulation tables.

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Procedure, Scenario};
use crate::level::FdxLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// iid two-group rows at `(gamma, alpha) = (0.05, 0.05)`.
    Table1,
    /// Hierarchical design with empirical-null procedures at `(0.1, 0.05)`.
    Table2,
    /// Block counterexample; handled by `counterexample_experiment`.
    Table5,
    /// No signal (`pi = 0`).
    Table6,
    /// Extended `(pi, mu)` grid.
    Table7,
}

impl Preset {
    pub fn default_reps(&self) -> usize {
        match self {
            Preset::Table1 | Preset::Table2 => 2000,
            Preset::Table5 => 200,
            Preset::Table6 | Preset::Table7 => 1000,
        }
    }

    /// Correlations of the counterexample grid.
    pub const TABLE5_RHOS: [f64; 6] = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9];

    /// Per-test observation count behind the hierarchical z-values. With 100
    /// observations the shared null shift induces a null correlation of about
    /// 0.25 between z-values.
    pub const TABLE2_N_OBS: usize = 100;
}

const TWO_GROUP_PROCEDURES: [Procedure; 8] = [
    Procedure::Proc2Oracle,
    Procedure::Proc2Em,
    Procedure::Proc2EmpiricalNull,
    Procedure::ScOracle,
    Procedure::ScEm,
    Procedure::Bh,
    Procedure::Gr,
    Procedure::Lr,
];

/// Configurations of a preset (empty for [`Preset::Table5`]).
pub fn preset_configs(
    preset: Preset,
    reps: Option<usize>,
    seed: u64,
    threads: usize,
) -> Vec<ExperimentConfig> {
    let reps = reps.unwrap_or(preset.default_reps());
    let iid = |pi: f64, mu: f64| Scenario::Iid { m: 5000, pi, mu };
    let fdx_05 = FdxLevel::new(0.05, 0.05).expect("valid level");
    let (scenarios, procedures, level) = match preset {
        Preset::Table1 => (
            vec![
                iid(0.2, -1.5),
                iid(0.2, -2.0),
                iid(0.2, -2.5),
                iid(0.1, -2.0),
                iid(0.3, -2.0),
            ],
            TWO_GROUP_PROCEDURES.to_vec(),
            fdx_05,
        ),
        Preset::Table2 => (
            vec![Scenario::Hierarchical {
                m: 5000,
                n_obs: Preset::TABLE2_N_OBS,
            }],
            vec![
                Procedure::Proc2EmpiricalNull,
                Procedure::Gr,
                Procedure::GrEmpiricalNull,
            ],
            FdxLevel::new(0.1, 0.05).expect("valid level"),
        ),
        Preset::Table5 => return Vec::new(),
        Preset::Table6 => (vec![iid(0.0, -2.0)], TWO_GROUP_PROCEDURES.to_vec(), fdx_05),
        Preset::Table7 => (
            vec![
                iid(0.1, -1.5),
                iid(0.1, -2.5),
                iid(0.3, -1.5),
                iid(0.3, -2.5),
            ],
            TWO_GROUP_PROCEDURES.to_vec(),
            fdx_05,
        ),
    };
    scenarios
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            ExperimentConfig::new(s, procedures.clone(), level)
                .with_reps(reps)
                .with_seed(crate::numeric::derive_seed(seed, k as u64))
                .with_threads(threads)
        })
        .collect()
}
