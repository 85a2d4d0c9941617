//! Two equicorrelated blocks where ranking by marginal lfdr is not optimal.
//!
//! Ten z-values form two blocks of five, each block sharing its own factor.
//! Non-null coordinates get extra variance `0.01`. Per run we compare two
//! rejection sets of size two: the two smallest marginal lfdr values, and the
//! smallest value in each block. A run counts as contradictory when the two
//! sets differ and the per-block set has the strictly smaller exact
//! `P(FDP > 0.5 | z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::{derive_seed, stable_order};
use crate::oracle::{enumerate_posterior, DependenceModel};

const M: usize = 10;
const PI: f64 = 0.3;
const MU: f64 = -1.5;
const GAMMA: f64 = 0.5;
const INFLATION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub rho: f64,
    pub runs: usize,
    pub contradictions: usize,
    pub percent: f64,
}

fn blocks() -> Vec<Vec<usize>> {
    vec![(0..M / 2).collect(), (M / 2..M).collect()]
}

/// One run at correlation `rho`; `true` when the per-block selection wins.
pub fn counterexample_trial(rho: f64, seed: u64) -> Result<bool> {
    let model = DependenceModel::exchangeable(MU, rho, PI)?
        .with_blocks(blocks())
        .with_inflation(INFLATION);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let (a, b, c) = (rho.sqrt(), (1.0 - rho).sqrt(), INFLATION.sqrt());
    let z: Vec<f64> = (0..M)
        .map(|i| {
            let theta = rng.random::<f64>() < PI;
            let zeta: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            let signal = if theta { MU + c * eta } else { 0.0 };
            signal + a * factors[i / (M / 2)] + b * zeta
        })
        .collect();

    let post = enumerate_posterior(&z, &model)?;
    let lfdr = post.marginal_lfdr();
    let mut top: Vec<usize> = stable_order(lfdr)[..2].to_vec();
    let mut per_block: Vec<usize> = blocks()
        .iter()
        .map(|b| {
            *b.iter()
                .min_by(|&&i, &&j| lfdr[i].total_cmp(&lfdr[j]).then(i.cmp(&j)))
                .expect("blocks are non-empty")
        })
        .collect();
    top.sort_unstable();
    per_block.sort_unstable();
    if top == per_block {
        return Ok(false);
    }
    Ok(post.exact_tail(&per_block, GAMMA)? < post.exact_tail(&top, GAMMA)?)
}

/// Percentage of contradictory runs for each correlation.
pub fn counterexample_experiment(
    rhos: &[f64],
    runs: usize,
    seed: u64,
) -> Result<Vec<CounterexampleRow>> {
    if runs == 0 {
        return domain("need at least one run");
    }
    rhos.iter()
        .enumerate()
        .map(|(k, &rho)| {
            if !(0.0..1.0).contains(&rho) {
                return domain(format!("rho must lie in [0, 1), got {rho}"));
            }
            let base = derive_seed(seed, k as u64);
            let hits: Vec<bool> = (0..runs)
                .into_par_iter()
                .map(|r| counterexample_trial(rho, derive_seed(base, r as u64)))
                .collect::<Result<_>>()?;
            let contradictions = hits.iter().filter(|&&h| h).count();
            Ok(CounterexampleRow {
                rho,
                runs,
                contradictions,
                percent: 100.0 * contradictions as f64 / runs as f64,
            })
        })
        .collect()
}
