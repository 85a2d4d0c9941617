//! Shared inputs for the criterion benchmarks.

use fdx_core::{gen_iid, lfdr_oracle, FdxLevel, LfdrVector, TwoGroupModel};

/// Oracle lfdr of `pi = 0.1, mu = -2` data, the setting of `fdx bench`.
pub fn oracle_lfdr(m: usize, seed: u64) -> LfdrVector {
    let data = gen_iid(m, 0.1, -2.0, seed).expect("valid design");
    lfdr_oracle(
        &data.z,
        &TwoGroupModel::standard(0.1, -2.0).expect("valid model"),
    )
    .expect("finite z")
}

pub fn bench_level() -> FdxLevel {
    FdxLevel::new(0.1, 0.05).expect("valid level")
}

/// The `k` smallest lfdr values, the success probabilities of a prefix tail.
pub fn prefix_probabilities(lfdr: &LfdrVector, k: usize) -> Vec<f64> {
    lfdr.sorted_values().into_iter().take(k).collect()
}
