//! False discovery exceedance (FDX) control for large-scale multiple testing.
//!
//! Hypotheses are ranked by their local false discovery rate (lfdr) and the
//! number of rejections is chosen so that the posterior probability of the
//! false discovery proportion exceeding `gamma` stays below `alpha`. The
//! number of false discoveries among the top `k` hypotheses is Poisson-binomial
//! given the data, which is what [`pbd`] computes exactly.
//!
//! Module map:
//!
//! - [`pbd`]: Poisson-binomial pmf and strict tails, binomial comparisons, and
//!   the relative-entropy pre-filter.
//! - [`twogroup`]: two-group mixture model, oracle and estimated lfdr, p-values,
//!   Gaussian-mixture EM and empirical-null fitting.
//! - [`procedures`]: the FDX step-up rules (full scan and shortcut versions)
//!   and the comparators BH, adaptive-z, Lehmann-Romano and Guo-Romano.
//! - [`oracle`]: exhaustive posterior enumeration for small `m` and exact lfdr
//!   under the equicorrelated Gaussian model.
//! - [`simharness`]: data generators, per-trial metrics and the replicated
//!   experiment runner.

// Argument checks use `!(x > 0.0)` style so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod level;
pub mod normal;
pub mod oracle;
pub mod pbd;
pub mod procedures;
pub mod simharness;
pub mod twogroup;

mod numeric;

pub use error::{FdxError, Result};
pub use level::{FdpTolerance, FdxLevel};
pub use oracle::{enumerate_posterior, exchangeable_lfdr, DependenceModel, Posterior};
pub use pbd::{binomial_tail_gt, entropy_prefilter_threshold, pbd_pmf, pbd_tail_gt, PbdPmf};
pub use procedures::{
    bh, guo_romano, lehmann_romano, procedure1, procedure2, sc_adaptive, ProcedureOptions,
    RandomizedExtra, RejectionResult,
};
pub use simharness::{
    compute_metrics, counterexample_experiment, gen_equicorr, gen_hierarchical, gen_iid,
    run_experiment, ExperimentConfig, ExperimentReport, Procedure, Scenario, SimulatedDataset,
    TrialMetrics,
};
pub use twogroup::{
    fit_empirical_null, fit_mixture_em, lfdr_empirical, lfdr_oracle, pvalue_from_z,
    pvalue_from_z_sided, DensityMethod, EmpiricalNull, Gaussian, LfdrVector, PValueSide,
    TwoGroupModel, WeightedGaussian,
};
