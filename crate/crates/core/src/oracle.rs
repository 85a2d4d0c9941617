//! Exact posteriors under Gaussian dependence.
//!
//! [`enumerate_posterior`] visits all `2^m` null/non-null configurations for
//! small `m`. The covariance is block diagonal with equicorrelated blocks, so
//! the likelihood factorises over blocks and each block's `2^b` sub-likelihoods
//! are computed once.
//!
//! [`exchangeable_lfdr`] handles one shared factor `W` for any `m`: given `W`
//! the z-values are independent, so each marginal is a one-dimensional integral
//! over `W`, evaluated by Gauss-Hermite quadrature centred on the posterior
//! mode of `W`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, FdxError, Result};
use crate::level::FdpTolerance;
use crate::normal::std_normal_ln_pdf;
use crate::numeric::{log_sum_exp, pairwise_sum};
use crate::twogroup::{lfdr_oracle, LfdrVector, TwoGroupModel};

/// Largest `m` accepted by [`enumerate_posterior`].
pub const MAX_ENUMERATION: usize = 16;

const QUADRATURE_START: usize = 64;
const QUADRATURE_MAX: usize = 256;
const QUADRATURE_TOL: f64 = 1e-8;

/// `Z_i = mu theta_i + sqrt(rho) W_b(i) + sqrt(1 - rho) zeta_i`, with
/// `theta_i ~ Bernoulli(pi)` and one factor `W_b` per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceModel {
    pub mu: f64,
    pub rho: f64,
    pub pi: f64,
    /// Partition of the indices into equicorrelated blocks; `None` is one block.
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Extra variance added to non-null coordinates, `Sigma + c diag(theta)`.
    pub nonnull_variance_inflation: f64,
}

impl DependenceModel {
    pub fn exchangeable(mu: f64, rho: f64, pi: f64) -> Result<Self> {
        let model = Self {
            mu,
            rho,
            pi,
            blocks: None,
            nonnull_variance_inflation: 0.0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_blocks(mut self, blocks: Vec<Vec<usize>>) -> Self {
        self.blocks = Some(blocks);
        self
    }

    pub fn with_inflation(mut self, c: f64) -> Self {
        self.nonnull_variance_inflation = c;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return domain(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(0.0..1.0).contains(&self.pi) {
            return domain(format!("pi must lie in [0, 1), got {}", self.pi));
        }
        if !self.mu.is_finite() {
            return domain("mu must be finite");
        }
        if !(self.nonnull_variance_inflation >= 0.0 && self.nonnull_variance_inflation.is_finite())
        {
            return domain("variance inflation must be non-negative");
        }
        Ok(())
    }

    fn block_partition(&self, m: usize) -> Result<Vec<Vec<usize>>> {
        let Some(blocks) = &self.blocks else {
            return Ok(vec![(0..m).collect()]);
        };
        let mut seen = vec![false; m];
        for &i in blocks.iter().flatten() {
            if i >= m || seen[i] {
                return domain(format!("blocks do not partition 0..{m}: index {i}"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return domain(format!("blocks do not cover 0..{m}"));
        }
        Ok(blocks.iter().filter(|b| !b.is_empty()).cloned().collect())
    }
}

/// Posterior over all configurations; bit `i` of a configuration index is `theta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    m: usize,
    probs: Vec<f64>,
    marginal_lfdr: Vec<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// `P(theta | z)` indexed by configuration bitmask.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(theta_i = 0 | z)`.
    pub fn marginal_lfdr(&self) -> &[f64] {
        &self.marginal_lfdr
    }

    /// `P(#{i in S : theta_i = 0} > gamma |S| | z)`.
    pub fn exact_tail(&self, set: &[usize], gamma: f64) -> Result<f64> {
        let gamma = FdpTolerance::new(gamma)?;
        let mut mask = 0usize;
        for &i in set {
            if i >= self.m {
                return domain(format!("index {i} out of range for m = {}", self.m));
            }
            if mask & (1 << i) != 0 {
                return domain(format!("index {i} repeated in rejection set"));
            }
            mask |= 1 << i;
        }
        let tolerated = gamma.tolerated_false(set.len());
        let terms: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(theta, &p)| {
                let false_count = set.len() - (theta & mask).count_ones() as usize;
                if false_count > tolerated {
                    p
                } else {
                    0.0
                }
            })
            .collect();
        Ok(pairwise_sum(&terms).clamp(0.0, 1.0))
    }
}

/// Exact posterior over `theta in {0, 1}^m` for `m <= 16`.
pub fn enumerate_posterior(z: &[f64], model: &DependenceModel) -> Result<Posterior> {
    model.validate()?;
    let m = z.len();
    if m > MAX_ENUMERATION {
        return Err(FdxError::Capacity {
            what: "hypotheses for posterior enumeration",
            got: m,
            max: MAX_ENUMERATION,
        });
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return domain(format!("z-value {v} is not finite"));
    }
    let blocks = model.block_partition(m)?;
    let block_ll: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| block_log_likelihoods(z, b, model))
        .collect::<Result<_>>()?;

    let configs = 1usize << m;
    let (ln_pi, ln_q) = (model.pi.ln(), (1.0 - model.pi).ln());
    let log_post: Vec<f64> = (0..configs)
        .map(|theta| {
            let ones = theta.count_ones() as usize;
            if model.pi == 0.0 && ones > 0 {
                return f64::NEG_INFINITY;
            }
            let prior = if ones > 0 { ones as f64 * ln_pi } else { 0.0 } + (m - ones) as f64 * ln_q;
            let ll: f64 = blocks
                .iter()
                .zip(&block_ll)
                .map(|(b, ll)| ll[sub_config(theta, b)])
                .sum();
            prior + ll
        })
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total = pairwise_sum(&weights);
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let marginal_lfdr = (0..m)
        .map(|i| {
            let terms: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(theta, &p)| if theta & (1 << i) == 0 { p } else { 0.0 })
                .collect();
            pairwise_sum(&terms).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Posterior {
        m,
        probs,
        marginal_lfdr,
    })
}

/// Bits of `theta` at the block's indices, packed in block order.
fn sub_config(theta: usize, block: &[usize]) -> usize {
    block
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &i)| acc | (((theta >> i) & 1) << j))
}

/// Gaussian log-likelihood of the block's z-values for every sub-configuration.
fn block_log_likelihoods(z: &[f64], block: &[usize], model: &DependenceModel) -> Result<Vec<f64>> {
    let b = block.len();
    let zb = DVector::from_iterator(b, block.iter().map(|&i| z[i]));
    let base = DMatrix::from_fn(b, b, |r, c| if r == c { 1.0 } else { model.rho });
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    (0..1usize << b)
        .map(|sub| {
            let mut cov = base.clone();
            let mut resid = zb.clone();
            for j in 0..b {
                if sub >> j & 1 == 1 {
                    cov[(j, j)] += model.nonnull_variance_inflation;
                    resid[j] -= model.mu;
                }
            }
            let chol = cov
                .cholesky()
                .ok_or_else(|| FdxError::Domain("block covariance is singular".to_string()))?;
            let solved = chol.solve(&resid);
            let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            Ok(-0.5 * (resid.dot(&solved) + log_det + b as f64 * ln_2pi))
        })
        .collect()
}

/// `P(theta_i = 0 | z)` under the fully exchangeable model, by adaptive
/// Gauss-Hermite quadrature over the shared factor.
pub fn exchangeable_lfdr(z: &[f64], model: &DependenceModel) -> Result<LfdrVector> {
    model.validate()?;
    if model.blocks.is_some() || model.nonnull_variance_inflation != 0.0 {
        return domain("exchangeable lfdr needs a single block without variance inflation");
    }
    if model.pi == 0.0 {
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return domain(format!("z-value {v} is not finite"));
        }
        return LfdrVector::new(vec![1.0; z.len()]);
    }
    if model.rho == 0.0 {
        return lfdr_oracle(z, &TwoGroupModel::standard(model.pi, model.mu)?);
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return domain(format!("z-value {v} is not finite"));
    }
    let factor = SharedFactor::new(z, model);
    let (center, scale) = factor.laplace_point();
    let mut n = QUADRATURE_START;
    let mut prev = factor.quadrature(center, scale, n);
    while n < QUADRATURE_MAX {
        n *= 2;
        let next = factor.quadrature(center, scale, n);
        let diff = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = next;
        if diff < QUADRATURE_TOL {
            break;
        }
    }
    LfdrVector::new(prev.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

struct SharedFactor<'a> {
    z: &'a [f64],
    mu: f64,
    sqrt_rho: f64,
    s: f64,
    ln_null_prior: f64,
    ln_alt_prior: f64,
}

impl<'a> SharedFactor<'a> {
    fn new(z: &'a [f64], model: &DependenceModel) -> Self {
        Self {
            z,
            mu: model.mu,
            sqrt_rho: model.rho.sqrt(),
            s: (1.0 - model.rho).sqrt(),
            ln_null_prior: (1.0 - model.pi).ln(),
            ln_alt_prior: model.pi.ln(),
        }
    }

    /// Log of the null and non-null terms for coordinate `zi` at `W = w`.
    fn terms(&self, zi: f64, w: f64) -> (f64, f64) {
        let c = zi - self.sqrt_rho * w;
        let ln_s = self.s.ln();
        (
            self.ln_null_prior + std_normal_ln_pdf(c / self.s) - ln_s,
            self.ln_alt_prior + std_normal_ln_pdf((c - self.mu) / self.s) - ln_s,
        )
    }

    /// `log phi(w) + sum_i log(a0_i + a1_i)` with first and second derivatives.
    fn log_integrand(&self, w: f64) -> (f64, f64, f64) {
        let s2 = self.s * self.s;
        let (mut g, mut d1, mut d2) = (std_normal_ln_pdf(w), -w, -1.0);
        for &zi in self.z {
            let (a0, a1) = self.terms(zi, w);
            let l = log_sum_exp(&[a0, a1]);
            let r1 = (a1 - l).exp();
            let r0 = (a0 - l).exp();
            g += l;
            d1 += self.sqrt_rho / s2 * (zi - self.sqrt_rho * w - self.mu * r1);
            d2 += self.sqrt_rho * self.sqrt_rho / s2 * (-1.0 + self.mu * self.mu * r0 * r1 / s2);
        }
        (g, d1, d2)
    }

    /// Posterior mode of `W` and the matching normal-approximation scale.
    fn laplace_point(&self) -> (f64, f64) {
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..=480 {
            let w = -12.0 + 0.05 * i as f64;
            let g = self.log_integrand(w).0;
            if g > best.1 {
                best = (w, g);
            }
        }
        let mut w = best.0;
        for _ in 0..50 {
            let (_, d1, d2) = self.log_integrand(w);
            if !(d2 < 0.0) {
                break;
            }
            let step = (d1 / d2).clamp(-0.5, 0.5);
            w -= step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        let d2 = self.log_integrand(w).2;
        let scale = if d2 < 0.0 { (-d2).sqrt().recip() } else { 1.0 };
        (w, scale)
    }

    /// Posterior null probabilities with `n` nodes at `w = center + scale sqrt(2) x`.
    fn quadrature(&self, center: f64, scale: f64, n: usize) -> Vec<f64> {
        let (nodes, ln_weights) = gauss_hermite(n);
        let mut log_mass = Vec::with_capacity(n);
        let mut null_probs = Vec::with_capacity(n);
        for (&x, &lw) in nodes.iter().zip(&ln_weights) {
            let w = center + scale * std::f64::consts::SQRT_2 * x;
            let mut g = lw + x * x + std_normal_ln_pdf(w);
            let mut r0 = Vec::with_capacity(self.z.len());
            for &zi in self.z {
                let (a0, a1) = self.terms(zi, w);
                let l = log_sum_exp(&[a0, a1]);
                g += l;
                r0.push((a0 - l).exp());
            }
            log_mass.push(g);
            null_probs.push(r0);
        }
        let max = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mass: Vec<f64> = log_mass.iter().map(|l| (l - max).exp()).collect();
        let total = pairwise_sum(&mass);
        (0..self.z.len())
            .map(|i| {
                let terms: Vec<f64> = mass
                    .iter()
                    .zip(&null_probs)
                    .map(|(m, r)| m * r[i])
                    .collect();
                pairwise_sum(&terms) / total
            })
            .collect()
    }
}

/// Gauss-Hermite nodes and log-weights for weight `exp(-x^2)`.
///
/// Nodes start from the eigenvalues of the Jacobi matrix and are polished by
/// Newton steps on the orthonormal Hermite recurrence, which also yields the
/// weights without underflow in the far nodes.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |r, c| {
        if r.abs_diff(c) == 1 {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = jacobi
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    x.sort_by(|a, b| b.total_cmp(a));
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut lw = vec![0.0; n];
    for (z, l) in x.iter_mut().zip(lw.iter_mut()) {
        let mut pp = 1.0;
        for _ in 0..20 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = *z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            *z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        *l = std::f64::consts::LN_2 - 2.0 * pp.abs().ln();
    }
    (x, lw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pbd::pbd_tail_gt;

    #[test]
    fn gauss_hermite_integrates_moments() {
        for n in [64, 128, 256] {
            let (x, lw) = gauss_hermite(n);
            let w: Vec<f64> = lw.iter().map(|l| l.exp()).collect();
            let m0: f64 = w.iter().sum();
            let m2: f64 = w.iter().zip(&x).map(|(w, x)| w * x * x).sum();
            let m4: f64 = w.iter().zip(&x).map(|(w, x)| w * x.powi(4)).sum();
            let sp = std::f64::consts::PI.sqrt();
            assert!((m0 - sp).abs() < 1e-12, "{n}: {m0}");
            assert!((m2 - sp / 2.0).abs() < 1e-12);
            assert!((m4 - 0.75 * sp).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_matches_two_group_oracle() {
        let z = [-2.5, -0.3, 0.8, -1.7, 1.9, -3.1];
        let model = DependenceModel::exchangeable(-2.0, 0.0, 0.2).unwrap();
        let post = enumerate_posterior(&z, &model).unwrap();
        let direct = lfdr_oracle(&z, &TwoGroupModel::standard(0.2, -2.0).unwrap()).unwrap();
        for (a, b) in post.marginal_lfdr().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let set = [0, 3, 5];
        let tail = post.exact_tail(&set, 0.4).unwrap();
        let p: Vec<f64> = set.iter().map(|&i| direct.values()[i]).collect();
        assert!((tail - pbd_tail_gt(&p, 0.4 * 3.0).unwrap()).abs() < 1e-10);
        assert!((pairwise_sum(post.probs()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_prior_puts_all_mass_on_the_null_configuration() {
        let model = DependenceModel::exchangeable(-2.0, 0.4, 0.0).unwrap();
        let post = enumerate_posterior(&[-3.0, 0.0, 1.0], &model).unwrap();
        assert_eq!(post.probs()[0], 1.0);
        assert!(post.marginal_lfdr().iter().all(|&v| v == 1.0));
        let ex = exchangeable_lfdr(&[-3.0, 0.0], &model).unwrap();
        assert_eq!(ex.values(), &[1.0, 1.0]);
    }

    #[test]
    fn capacity_and_domain_errors() {
        let model = DependenceModel::exchangeable(-1.0, 0.2, 0.1).unwrap();
        assert!(matches!(
            enumerate_posterior(&[0.0; 17], &model),
            Err(FdxError::Capacity { got: 17, .. })
        ));
        assert!(DependenceModel::exchangeable(-1.0, 1.0, 0.1).is_err());
        let bad = model.clone().with_blocks(vec![vec![0, 1], vec![1]]);
        assert!(enumerate_posterior(&[0.0, 0.0, 0.0], &bad).is_err());
        assert!(exchangeable_lfdr(&[0.0], &model.with_inflation(0.01)).is_err());
    }

    #[test]
    fn quadrature_matches_enumeration() {
        let z = [-2.8, -1.1, 0.4, -0.2, -3.5, 1.3, -1.9, 0.0];
        for rho in [0.3, 0.5, 0.7] {
            let model = DependenceModel::exchangeable(-1.5, rho, 0.3).unwrap();
            let post = enumerate_posterior(&z, &model).unwrap();
            let quad = exchangeable_lfdr(&z, &model).unwrap();
            for (a, b) in post.marginal_lfdr().iter().zip(quad.values()) {
                assert!((a - b).abs() < 1e-8, "rho {rho}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn blocks_factorise() {
        let z = [-2.0, -0.5, 0.3, -1.4];
        let blocked = DependenceModel::exchangeable(-1.5, 0.5, 0.3)
            .unwrap()
            .with_blocks(vec![vec![0, 1], vec![2, 3]]);
        let joint = enumerate_posterior(&z, &blocked).unwrap();
        let single = DependenceModel::exchangeable(-1.5, 0.5, 0.3).unwrap();
        let left = enumerate_posterior(&z[..2], &single).unwrap();
        let right = enumerate_posterior(&z[2..], &single).unwrap();
        let expect = left.marginal_lfdr().iter().chain(right.marginal_lfdr());
        for (a, b) in joint.marginal_lfdr().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
