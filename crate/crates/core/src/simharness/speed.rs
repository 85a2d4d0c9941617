//! Wall-clock comparison of the full scan against the shortcut procedure.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generate::gen_iid;
use crate::error::Result;
use crate::level::FdxLevel;
use crate::procedures::{procedure1, procedure2, ProcedureOptions};
use crate::twogroup::{lfdr_oracle, TwoGroupModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub m: usize,
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub k: usize,
    pub k_full_scan: usize,
    pub full_scan_seconds: f64,
    pub shortcut_seconds: f64,
    /// `full_scan_seconds / shortcut_seconds`.
    pub speedup: f64,
    /// Both procedures rejected exactly the same hypotheses.
    pub identical: bool,
}

/// Oracle lfdr of `pi = 0.1, mu = -2` data at `(gamma, alpha) = (0.1, 0.05)`.
pub fn speed_comparison(m: usize, seed: u64) -> Result<SpeedReport> {
    let data = gen_iid(m, 0.1, -2.0, seed)?;
    let lfdr = lfdr_oracle(&data.z, &TwoGroupModel::standard(0.1, -2.0)?)?;
    let level = FdxLevel::new(0.1, 0.05)?;
    let opts = ProcedureOptions::default();

    let start = Instant::now();
    let full = procedure1(&lfdr, &level, &opts);
    let full_scan_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let short = procedure2(&lfdr, &level, &opts);
    let shortcut_seconds = start.elapsed().as_secs_f64();

    Ok(SpeedReport {
        m,
        seed,
        k1: short.k1,
        k2: short.k2,
        k: short.k_final,
        k_full_scan: full.k_final,
        full_scan_seconds,
        shortcut_seconds,
        speedup: full_scan_seconds / shortcut_seconds.max(1e-9),
        identical: full.rejected == short.rejected,
    })
}
