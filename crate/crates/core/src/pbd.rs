//! Poisson-binomial distribution kernel.
//!
//! The pmf is built by sequential convolution in index order, one Bernoulli
//! factor at a time. After each factor the masses are clamped to `[0, 1]`; they
//! are never renormalised, so the `1e-12` normalisation contract is a real check
//! on the arithmetic.
//!
//! Tail probabilities are strict: `P(X > t)` counts integer outcomes `j > t`.

use statrs::function::beta::beta_reg;

use crate::error::{domain, Result};
use crate::level::FdxLevel;
use crate::numeric::compensated_sum;

/// Probability mass function of a Poisson-binomial count, indexed by count.
#[derive(Debug, Clone, PartialEq)]
pub struct PbdPmf {
    mass: Vec<f64>,
}

impl PbdPmf {
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Number of Bernoulli trials.
    pub fn trials(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    /// `P(X > count)` for an integer count.
    pub fn tail_above(&self, count: usize) -> f64 {
        tail_above(&self.mass, count)
    }

    /// `P(X > t)` for a real threshold `t >= 0`.
    pub fn tail_gt(&self, t: f64) -> Result<f64> {
        Ok(self.tail_above(threshold_count(t)?))
    }
}

fn tail_above(mass: &[f64], count: usize) -> f64 {
    if count + 1 >= mass.len() {
        return 0.0;
    }
    compensated_sum(mass[count + 1..].iter().copied()).clamp(0.0, 1.0)
}

/// Integer `c` such that `j > t` iff `j > c`, i.e. `floor(t)`.
fn threshold_count(t: f64) -> Result<usize> {
    if t.is_nan() || t < 0.0 {
        return domain(format!("tail threshold must be non-negative, got {t}"));
    }
    if t >= usize::MAX as f64 {
        return Ok(usize::MAX - 1);
    }
    Ok(t.floor() as usize)
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("success probability must lie in [0, 1], got {p}"));
    }
    Ok(())
}

/// Incrementally convolved Poisson-binomial pmf.
///
/// After pushing `p_1..p_k` the state is bit-identical to `pbd_pmf(&p[..k])`,
/// which lets the step-up scans reuse one pass for every prefix.
#[derive(Debug, Clone)]
pub struct PbdAccumulator {
    mass: Vec<f64>,
}

impl Default for PbdAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl PbdAccumulator {
    pub fn new() -> Self {
        Self { mass: vec![1.0] }
    }

    pub fn with_capacity(k: usize) -> Self {
        let mut mass = Vec::with_capacity(k + 1);
        mass.push(1.0);
        Self { mass }
    }

    pub fn trials(&self) -> usize {
        self.mass.len() - 1
    }

    /// Convolve one more Bernoulli(`p`) factor into the distribution.
    pub fn push(&mut self, p: f64) -> Result<()> {
        check_prob(p)?;
        self.push_unchecked(p);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, p: f64) {
        let q = 1.0 - p;
        let n = self.mass.len();
        self.mass.push(0.0);
        // Descending in j so mass[j - 1] is still the previous step's value.
        self.mass[n] = (self.mass[n - 1] * p).clamp(0.0, 1.0);
        for j in (1..n).rev() {
            let v = self.mass[j - 1].mul_add(p, self.mass[j] * q);
            self.mass[j] = v.clamp(0.0, 1.0);
        }
        self.mass[0] = (self.mass[0] * q).clamp(0.0, 1.0);
    }

    pub fn tail_above(&self, count: usize) -> f64 {
        tail_above(&self.mass, count)
    }

    pub fn pmf(&self) -> PbdPmf {
        PbdPmf {
            mass: self.mass.clone(),
        }
    }

    pub fn into_pmf(self) -> PbdPmf {
        PbdPmf { mass: self.mass }
    }
}

/// Exact Poisson-binomial pmf of `sum_i Bernoulli(p_i)`.
pub fn pbd_pmf(p: &[f64]) -> Result<PbdPmf> {
    let mut acc = PbdAccumulator::with_capacity(p.len());
    for &pi in p {
        acc.push(pi)?;
    }
    Ok(acc.into_pmf())
}

/// `P(sum_i Bernoulli(p_i) > t)`.
pub fn pbd_tail_gt(p: &[f64], t: f64) -> Result<f64> {
    let count = threshold_count(t)?;
    pbd_pmf(p).map(|pmf| pmf.tail_above(count))
}

/// `P(Binomial(k, q) > t)` with the same strict-count semantics as [`pbd_tail_gt`].
pub fn binomial_tail_gt(k: usize, q: f64, t: f64) -> Result<f64> {
    check_prob(q)?;
    let count = threshold_count(t)?;
    Ok(binomial_tail_above(k, q, count))
}

/// `P(Binomial(k, q) > count)`; `q` must already be validated.
pub(crate) fn binomial_tail_above(k: usize, q: f64, count: usize) -> f64 {
    if count >= k || q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    // P(X >= c) = I_q(c, k - c + 1)
    let c = (count + 1) as f64;
    beta_reg(c, k as f64 - c + 1.0, q).clamp(0.0, 1.0)
}

/// Relative entropy between a `gamma`-coin and an `eps`-coin.
pub fn relative_entropy(gamma: f64, eps: f64) -> f64 {
    gamma * (gamma / eps).ln() + (1.0 - gamma) * ((1.0 - gamma) / (1.0 - eps)).ln()
}

/// Largest `eps` in `(0, gamma)` with `exp(-H(gamma, eps)) <= alpha`.
///
/// This is the single-hypothesis form of the Chernoff bound
/// `P(Binomial(k, eps) >= gamma k) <= exp(-k H)`, so it holds for every `k >= 1`.
pub fn entropy_prefilter_threshold(level: &FdxLevel) -> f64 {
    entropy_prefilter_threshold_for_count(level, 1)
}

/// Largest `eps` in `(0, gamma)` with `exp(-k H(gamma, eps)) <= alpha`.
///
/// Any `k` hypotheses whose lfdr values are all at most this `eps` can be
/// rejected together without the tail probability exceeding `alpha`.
pub fn entropy_prefilter_threshold_for_count(level: &FdxLevel, k: usize) -> f64 {
    let gamma = level.gamma();
    let target = (1.0 / level.alpha()).ln() / k.max(1) as f64;
    // H decreases from +inf to 0 on (0, gamma); bisect on ln(eps) so tiny
    // roots keep full relative precision.
    let (mut lo, mut hi) = (f64::MIN_POSITIVE.ln(), gamma.ln());
    if relative_entropy(gamma, lo.exp()) < target {
        return 0.0;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if relative_entropy(gamma, mid.exp()) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp()
}
