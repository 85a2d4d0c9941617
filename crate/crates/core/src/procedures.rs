//! FDX step-up rules and the comparator procedures.
//!
//! [`procedure1`] evaluates the Poisson-binomial tail of the `k` smallest lfdr
//! values for every `k` and keeps the largest passing `k`. [`procedure2`]
//! reaches the same `K` after two cheap screens: a running-mean bound `K1`
//! (an FDX-controlling set has FDR at most `alpha + gamma (1 - alpha)`) and a
//! binomial bound `K2` using the geometric mean of the lfdr values, which is
//! stochastically smaller than the Poisson-binomial count. Only `k <= K2` then
//! need the exact tail.
//!
//! Both procedures build the tail for each prefix with the same incremental
//! convolution, so for a given `k` they compare bit-identical numbers against
//! `alpha`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::level::FdxLevel;
use crate::pbd::{binomial_tail_above, entropy_prefilter_threshold_for_count, PbdAccumulator};
use crate::twogroup::LfdrVector;

/// Relative slack on the screening bounds so that rounding in the running
/// mean or the incomplete beta function can never cut below the exact `K`.
const SCREEN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProcedureOptions {
    /// Reject hypothesis `K + 1` with the probability that makes the FDX exactly `alpha`.
    pub randomize: bool,
    pub seed: u64,
    /// Skip exact tails below the relative-entropy floor (`procedure2` only).
    pub prefilter: bool,
}

/// Outcome of the optional extra rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedExtra {
    pub probability: f64,
    pub outcome: bool,
    /// Original index of hypothesis `K + 1`.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionResult {
    pub k_final: usize,
    /// Indices of the `k_final` smallest lfdr values, in rank order.
    pub rejected: Vec<usize>,
    pub k1: usize,
    pub k2: usize,
    /// `P(false count > gamma K | data)` at `K`; zero when `K = 0`.
    pub tail_at_k: f64,
    /// Prefix rejectable by the relative-entropy bound alone, when computed.
    pub k_floor: Option<usize>,
    pub randomized_extra: Option<RandomizedExtra>,
}

impl RejectionResult {
    /// `K`, plus one if the randomized extra rejection fired.
    pub fn final_rejections(&self) -> usize {
        self.k_final + usize::from(self.randomized_extra.is_some_and(|e| e.outcome))
    }

    /// The rejected indices including a fired randomized extra rejection.
    pub fn rejected_with_extra(&self) -> Vec<usize> {
        let mut out = self.rejected.clone();
        if let Some(extra) = self.randomized_extra.filter(|e| e.outcome) {
            out.push(extra.index);
        }
        out
    }
}

/// Exact tails of every prefix `k = 1..=limit` of the sorted lfdr values.
/// Entry `k - 1` holds the tail for `k`; prefixes up to `skip` are convolved
/// but their tails are not summed.
fn prefix_tails(
    sorted: &[f64],
    level: &FdxLevel,
    limit: usize,
    skip: usize,
) -> (Vec<f64>, PbdAccumulator) {
    let mut acc = PbdAccumulator::with_capacity(limit + 1);
    let mut tails = Vec::with_capacity(limit);
    for (k, &p) in sorted[..limit].iter().enumerate().map(|(i, p)| (i + 1, p)) {
        acc.push_unchecked(p);
        tails.push(if k <= skip {
            0.0
        } else {
            acc.tail_above(level.tolerated_false(k))
        });
    }
    (tails, acc)
}

fn largest_passing(tails: &[f64], alpha: f64, floor: usize) -> usize {
    tails
        .iter()
        .rposition(|&t| t <= alpha)
        .map_or(0, |i| i + 1)
        .max(floor)
}

/// Procedure 1: largest `k` whose exact tail `P(X_k > gamma k)` is at most `alpha`,
/// found by a full scan over every `k`.
pub fn procedure1(lfdr: &LfdrVector, level: &FdxLevel, opts: &ProcedureOptions) -> RejectionResult {
    let sorted = lfdr.sorted_values();
    let m = sorted.len();
    let (tails, acc) = prefix_tails(&sorted, level, m, 0);
    let k = largest_passing(&tails, level.alpha(), 0);
    finish(lfdr, &sorted, level, opts, k, m, m, &tails, acc, None)
}

/// Procedure 2: the same `K` as [`procedure1`], computed after the `K1` and
/// `K2` screens.
pub fn procedure2(lfdr: &LfdrVector, level: &FdxLevel, opts: &ProcedureOptions) -> RejectionResult {
    let sorted = lfdr.sorted_values();
    let k1 = running_mean_cutoff(&sorted, level.implied_fdr() * (1.0 + SCREEN_SLACK));
    let k2 = geometric_mean_cutoff(&sorted, level, k1);
    let k_floor = opts.prefilter.then(|| entropy_floor(&sorted, level, k2));
    let skip = k_floor.unwrap_or(0);
    let (tails, acc) = prefix_tails(&sorted, level, k2, skip);
    let k = largest_passing(&tails, level.alpha(), skip);
    finish(lfdr, &sorted, level, opts, k, k1, k2, &tails, acc, k_floor)
}

/// Largest `k` with `sum_{j <= k} T_(j) <= level * k`, scanning every `k`.
fn running_mean_cutoff(sorted: &[f64], level: f64) -> usize {
    let mut sum = 0.0;
    let mut best = 0;
    for (i, &t) in sorted.iter().enumerate() {
        sum += t;
        if sum <= level * (i + 1) as f64 {
            best = i + 1;
        }
    }
    best
}

/// Descending scan from `k1` for the first `k` whose binomial tail at the
/// geometric mean of the `k` smallest values is at most `alpha`.
fn geometric_mean_cutoff(sorted: &[f64], level: &FdxLevel, k1: usize) -> usize {
    let mut log_prefix = Vec::with_capacity(k1 + 1);
    let mut zeros = Vec::with_capacity(k1 + 1);
    let (mut s, mut z) = (0.0, 0usize);
    log_prefix.push(0.0);
    zeros.push(0);
    for &t in &sorted[..k1] {
        if t > 0.0 {
            s += t.ln();
        } else {
            z += 1;
        }
        log_prefix.push(s);
        zeros.push(z);
    }
    let bound = level.alpha() * (1.0 + SCREEN_SLACK);
    (1..=k1)
        .rev()
        .find(|&k| {
            let q = if zeros[k] > 0 {
                0.0
            } else {
                (log_prefix[k] / k as f64).exp().min(1.0)
            };
            binomial_tail_above(k, q, level.tolerated_false(k)) <= bound
        })
        .unwrap_or(0)
}

/// Longest prefix whose values all sit below the relative-entropy threshold
/// for its own length; such a prefix passes the exact test without evaluation.
fn entropy_floor(sorted: &[f64], level: &FdxLevel, limit: usize) -> usize {
    // The threshold grows with k while the sorted values grow too, so the
    // qualifying lengths need not be contiguous; take the largest.
    let mut hi = 0;
    let mut k = 1;
    while k <= limit {
        if sorted[k - 1] > level.gamma() {
            break;
        }
        if sorted[k - 1] <= entropy_prefilter_threshold_for_count(level, k) {
            hi = k;
        }
        k += 1;
    }
    hi
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lfdr: &LfdrVector,
    sorted: &[f64],
    level: &FdxLevel,
    opts: &ProcedureOptions,
    k: usize,
    k1: usize,
    k2: usize,
    tails: &[f64],
    mut acc: PbdAccumulator,
    k_floor: Option<usize>,
) -> RejectionResult {
    let tail_at = |k: usize, tails: &[f64]| if k == 0 { 0.0 } else { tails[k - 1] };
    let mut tail_k = tail_at(k, tails);
    if k_floor.is_some_and(|f| k <= f) && k > 0 {
        let mut exact = PbdAccumulator::with_capacity(k);
        for &p in &sorted[..k] {
            exact.push_unchecked(p);
        }
        tail_k = exact.tail_above(level.tolerated_false(k));
    }
    let m = sorted.len();
    let randomized_extra = (opts.randomize && k < m).then(|| {
        let next = if k < tails.len() {
            tails[k]
        } else {
            while acc.trials() < k + 1 {
                acc.push_unchecked(sorted[acc.trials()]);
            }
            acc.tail_above(level.tolerated_false(k + 1))
        };
        let denom = next - tail_k;
        let probability = if denom > 0.0 {
            ((level.alpha() - tail_k) / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let outcome = probability > 0.0 && rng.random::<f64>() < probability;
        RandomizedExtra {
            probability,
            outcome,
            index: lfdr.rank()[k],
        }
    });
    RejectionResult {
        k_final: k,
        rejected: lfdr.rank()[..k].to_vec(),
        k1,
        k2,
        tail_at_k: tail_k,
        k_floor,
        randomized_extra,
    }
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    if let Some((i, v)) = p
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
    {
        return domain(format!("p-value {v} at index {i} is outside (0, 1]"));
    }
    Ok(())
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("FDR level must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn ascending(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    idx
}

/// Benjamini-Hochberg step-up at FDR level `alpha_fdr`.
pub fn bh(p: &[f64], alpha_fdr: f64) -> Result<Vec<usize>> {
    check_pvalues(p)?;
    check_level(alpha_fdr)?;
    let order = ascending(p);
    let m = p.len() as f64;
    let k = order
        .iter()
        .enumerate()
        .rposition(|(j, &i)| p[i] <= (j + 1) as f64 * alpha_fdr / m)
        .map_or(0, |j| j + 1);
    Ok(order[..k].to_vec())
}

/// Adaptive z-value procedure: reject the largest prefix of sorted lfdr values
/// whose running mean is at most `alpha_fdr`.
pub fn sc_adaptive(lfdr: &LfdrVector, alpha_fdr: f64) -> Result<Vec<usize>> {
    check_level(alpha_fdr)?;
    let k = running_mean_cutoff(&lfdr.sorted_values(), alpha_fdr);
    Ok(lfdr.rank()[..k].to_vec())
}

/// Reject the smallest p-values while `p_(i) <= critical(i)` (`i` 1-based).
pub fn step_down(p: &[f64], mut critical: impl FnMut(usize) -> f64) -> Result<Vec<usize>> {
    check_pvalues(p)?;
    let order = ascending(p);
    let k = order
        .iter()
        .enumerate()
        .position(|(j, &i)| p[i] > critical(j + 1))
        .unwrap_or(order.len());
    Ok(order[..k].to_vec())
}

/// `alpha_i = (floor(gamma i) + 1) alpha / (m + floor(gamma i) + 1 - i)`.
pub fn lehmann_romano_critical_value(m: usize, i: usize, level: &FdxLevel) -> f64 {
    let j = level.tolerated_false(i) + 1;
    j as f64 * level.alpha() / (m + j - i) as f64
}

/// Lehmann-Romano step-down FDX procedure.
pub fn lehmann_romano(p: &[f64], level: &FdxLevel) -> Result<Vec<usize>> {
    let m = p.len();
    step_down(p, |i| lehmann_romano_critical_value(m, i, level))
}

/// `sup { u : P(Binomial(m - i + j, u) >= j) <= alpha }` with `j = floor(gamma i) + 1`,
/// by bisection to `1e-10`.
pub fn guo_romano_critical_value(m: usize, i: usize, level: &FdxLevel) -> f64 {
    let j = level.tolerated_false(i) + 1;
    let n = m + j - i;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if binomial_tail_above(n, mid, j - 1) <= level.alpha() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The first `count` Guo-Romano critical values for `m` hypotheses.
pub fn guo_romano_critical_values(m: usize, level: &FdxLevel, count: usize) -> Vec<f64> {
    (1..=count.min(m))
        .map(|i| guo_romano_critical_value(m, i, level))
        .collect()
}

/// Guo-Romano step-down FDX procedure; critical values are computed lazily.
pub fn guo_romano(p: &[f64], level: &FdxLevel) -> Result<Vec<usize>> {
    let m = p.len();
    step_down(p, |i| guo_romano_critical_value(m, i, level))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(g: f64, a: f64) -> FdxLevel {
        FdxLevel::new(g, a).unwrap()
    }

    fn lfdr(v: &[f64]) -> LfdrVector {
        LfdrVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn all_zero_lfdr_rejects_everything() {
        let v = lfdr(&[0.0; 7]);
        for r in [
            procedure1(&v, &level(0.1, 0.05), &Default::default()),
            procedure2(&v, &level(0.1, 0.05), &Default::default()),
        ] {
            assert_eq!(r.k_final, 7);
            assert_eq!(r.tail_at_k, 0.0);
        }
    }

    #[test]
    fn single_hypothesis() {
        let l = level(0.5, 0.05);
        assert_eq!(
            procedure1(&lfdr(&[0.03]), &l, &Default::default()).k_final,
            1
        );
        assert_eq!(
            procedure1(&lfdr(&[0.07]), &l, &Default::default()).k_final,
            0
        );
        assert_eq!(
            procedure2(&lfdr(&[0.07]), &l, &Default::default()).k_final,
            0
        );
    }

    #[test]
    fn running_mean_screen() {
        let r = procedure2(
            &lfdr(&[0.20, 0.01, 0.05]),
            &level(0.1, 0.05),
            &Default::default(),
        );
        assert_eq!(r.k1, 3);
        assert!(r.k_final <= r.k2 && r.k2 <= r.k1);
        assert_eq!(
            r.rejected,
            procedure1(
                &lfdr(&[0.20, 0.01, 0.05]),
                &level(0.1, 0.05),
                &Default::default()
            )
            .rejected
        );
    }

    #[test]
    fn randomized_extra_probability() {
        // gamma = 0.1 tolerates no false rejection at k = 1, 2: the tails are
        // 0.01 and 1 - 0.99 * 0.8 = 0.208.
        let v = lfdr(&[0.01, 0.2]);
        let opts = ProcedureOptions {
            randomize: true,
            seed: 1,
            prefilter: false,
        };
        let r = procedure1(&v, &level(0.1, 0.05), &opts);
        assert_eq!(r.k_final, 1);
        let extra = r.randomized_extra.unwrap();
        let expected = (0.05 - 0.01) / (1.0 - 0.99 * 0.8 - 0.01);
        assert!((extra.probability - expected).abs() < 1e-12);
        assert_eq!(extra.index, 1);
        let r2 = procedure2(&v, &level(0.1, 0.05), &opts);
        assert_eq!(
            (r.rejected, r.randomized_extra),
            (r2.rejected, r2.randomized_extra)
        );
        assert!(procedure1(&v, &level(0.1, 0.05), &Default::default())
            .randomized_extra
            .is_none());
    }

    #[test]
    fn prefilter_never_changes_the_answer() {
        let mut v: Vec<f64> = (0..300).map(|i| (i as f64 / 300.0).powi(4)).collect();
        v.reverse();
        let v = lfdr(&v);
        let l = level(0.1, 0.05);
        let plain = procedure2(&v, &l, &Default::default());
        let pre = procedure2(
            &v,
            &l,
            &ProcedureOptions {
                prefilter: true,
                ..Default::default()
            },
        );
        assert!(pre.k_floor.unwrap() > 0);
        assert_eq!(plain.rejected, pre.rejected);
        assert_eq!(plain.tail_at_k, pre.tail_at_k);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh(&[0.01, 0.02, 0.2, 0.9], 0.05).unwrap(), vec![0, 1]);
        assert!(bh(&[1.0; 5], 0.05).unwrap().is_empty());
        assert_eq!(bh(&[0.04], 0.05).unwrap(), vec![0]);
        assert!(bh(&[0.0], 0.05).is_err());
    }

    #[test]
    fn sc_examples() {
        assert_eq!(
            sc_adaptive(&lfdr(&[0.9, 0.01, 0.08]), 0.05).unwrap(),
            vec![1, 2]
        );
        assert_eq!(
            sc_adaptive(&lfdr(&[0.04, 0.5, 0.6]), 0.01).unwrap(),
            Vec::<usize>::new()
        );
        assert_eq!(
            sc_adaptive(&lfdr(&[0.01, 0.5, 0.6]), 0.02).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn lehmann_romano_constants() {
        let l = level(0.1, 0.05);
        assert!((lehmann_romano_critical_value(4, 1, &l) - 0.0125).abs() < 1e-15);
        assert!((lehmann_romano_critical_value(4, 2, &l) - 0.05 / 3.0).abs() < 1e-15);
        assert!(lehmann_romano(&[0.02, 0.5, 0.6, 0.7], &l)
            .unwrap()
            .is_empty());
        assert_eq!(
            lehmann_romano(&[0.01, 0.015, 0.6, 0.7], &l).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn guo_romano_constants() {
        let c = guo_romano_critical_value(1, 1, &level(0.5, 0.05));
        assert!((c - 0.05).abs() < 1e-9);
        for m in [1, 2, 5, 17, 60, 100] {
            for g in [0.05, 0.1, 0.3] {
                let l = level(g, 0.05);
                for (i, c) in guo_romano_critical_values(m, &l, m).iter().enumerate() {
                    assert!(*c >= lehmann_romano_critical_value(m, i + 1, &l) - 1e-10);
                }
            }
        }
    }
}
