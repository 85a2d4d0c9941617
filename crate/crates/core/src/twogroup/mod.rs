//! Two-group mixture model and local false discovery rates.
//!
//! Each z-value is null with probability `1 - pi` and drawn from `f0`, or
//! non-null and drawn from `f1`. The lfdr of `z` is the posterior null
//! probability `(1 - pi) f0(z) / f(z)`.

mod em;
mod empirical_null;
mod kde;

pub use em::{
    fit_gaussian_mixture, fit_mixture_em, GaussianMixture, MixtureFit, MixtureFitOptions,
    VarianceModel,
};
pub use empirical_null::{
    fit_empirical_null, fit_empirical_null_with, EmpiricalNull, NullFitMethod,
    DEFAULT_CENTRAL_FRACTION,
};
pub use kde::{silverman_bandwidth, Kde};

pub use crate::normal::Gaussian;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::{log_sum_exp, stable_order};

/// Mixture component with a weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl WeightedGaussian {
    pub fn gaussian(&self) -> Gaussian {
        Gaussian {
            mean: self.mean,
            sd: self.sd,
        }
    }
}

/// `F = (1 - pi) F0 + pi F1` with a Gaussian null and a Gaussian-mixture alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupModel {
    pi: f64,
    null: Gaussian,
    alternatives: Vec<WeightedGaussian>,
}

impl TwoGroupModel {
    pub fn new(pi: f64, null: Gaussian, alternatives: Vec<WeightedGaussian>) -> Result<Self> {
        if !(0.0..1.0).contains(&pi) {
            return domain(format!("non-null proportion must lie in [0, 1), got {pi}"));
        }
        Gaussian::new(null.mean, null.sd)?;
        for a in &alternatives {
            Gaussian::new(a.mean, a.sd)?;
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return domain(format!(
                    "alternative weight must be non-negative, got {}",
                    a.weight
                ));
            }
        }
        if pi > 0.0 {
            let total: f64 = alternatives.iter().map(|a| a.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return domain(format!("alternative weights must sum to 1, got {total}"));
            }
        }
        Ok(Self {
            pi,
            null,
            alternatives,
        })
    }

    /// `pi N(0, 1)`-null model with a single `N(mu, 1)` alternative.
    pub fn standard(pi: f64, mu: f64) -> Result<Self> {
        Self::new(
            pi,
            Gaussian::standard(),
            vec![WeightedGaussian {
                weight: 1.0,
                mean: mu,
                sd: 1.0,
            }],
        )
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn null(&self) -> Gaussian {
        self.null
    }

    pub fn alternatives(&self) -> &[WeightedGaussian] {
        &self.alternatives
    }

    pub fn ln_null_density(&self, z: f64) -> f64 {
        self.null.ln_pdf(z)
    }

    pub fn ln_alt_density(&self, z: f64) -> f64 {
        let terms: Vec<f64> = self
            .alternatives
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| a.weight.ln() + a.gaussian().ln_pdf(z))
            .collect();
        log_sum_exp(&terms)
    }

    /// Mixture density `f(z)`.
    pub fn density(&self, z: f64) -> f64 {
        self.ln_density(z).exp()
    }

    pub fn ln_density(&self, z: f64) -> f64 {
        let null = (1.0 - self.pi).ln() + self.ln_null_density(z);
        if self.pi == 0.0 {
            return null;
        }
        log_sum_exp(&[null, self.pi.ln() + self.ln_alt_density(z)])
    }

    /// `(1 - pi) f0(z) / f(z)`, computed as a logistic of the log-odds.
    pub fn lfdr_at(&self, z: f64) -> f64 {
        if self.pi == 0.0 {
            return 1.0;
        }
        let log_odds =
            self.pi.ln() + self.ln_alt_density(z) - (1.0 - self.pi).ln() - self.ln_null_density(z);
        (1.0 / (1.0 + log_odds.exp())).clamp(0.0, 1.0)
    }
}

/// Per-hypothesis lfdr values with their stable ascending rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdrVector {
    values: Vec<f64>,
    rank: Vec<usize>,
}

impl LfdrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return domain(format!("lfdr value {v} at index {i} is outside [0, 1]"));
        }
        let rank = stable_order(&values);
        Ok(Self { values, rank })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `rank[j]` is the index of the `j`-th smallest value.
    pub fn rank(&self) -> &[usize] {
        &self.rank
    }

    /// Values in rank order.
    pub fn sorted_values(&self) -> Vec<f64> {
        self.rank.iter().map(|&i| self.values[i]).collect()
    }

    /// 1-based position of every index in the ranking.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.values.len()];
        for (j, &i) in self.rank.iter().enumerate() {
            pos[i] = j + 1;
        }
        pos
    }
}

fn check_finite(z: &[f64]) -> Result<()> {
    if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return domain(format!("z-value {v} at index {i} is not finite"));
    }
    Ok(())
}

/// Oracle lfdr under a known two-group model.
pub fn lfdr_oracle(z: &[f64], model: &TwoGroupModel) -> Result<LfdrVector> {
    check_finite(z)?;
    LfdrVector::new(z.iter().map(|&zi| model.lfdr_at(zi)).collect())
}

/// Which tail of the null a p-value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueSide {
    /// `2 Phi(-|z - mean| / sd)`.
    #[default]
    TwoSided,
    /// `Phi((z - mean) / sd)`, for alternatives below the null.
    Lower,
    /// `1 - Phi((z - mean) / sd)`, for alternatives above the null.
    Upper,
}

/// Two-sided p-values `2 Phi(-|z - mean| / sd)` under the given null.
pub fn pvalue_from_z(z: &[f64], null: &Gaussian) -> Result<Vec<f64>> {
    pvalue_from_z_sided(z, null, PValueSide::TwoSided)
}

/// p-values for the requested tail, kept inside `(0, 1]`.
pub fn pvalue_from_z_sided(z: &[f64], null: &Gaussian, side: PValueSide) -> Result<Vec<f64>> {
    check_finite(z)?;
    Gaussian::new(null.mean, null.sd)?;
    let half_erfc = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    Ok(z.iter()
        .map(|&zi| {
            let x = (zi - null.mean) / null.sd;
            let p = match side {
                PValueSide::TwoSided => 2.0 * half_erfc(x.abs()),
                PValueSide::Lower => half_erfc(-x),
                PValueSide::Upper => half_erfc(x),
            };
            p.clamp(f64::MIN_POSITIVE, 1.0)
        })
        .collect())
}

/// How the mixture density in the lfdr denominator is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    /// Gaussian mixture fitted by EM with BIC selection.
    Mixture { seed: u64 },
    /// Gaussian kernel density estimate; Silverman's rule when no bandwidth is given.
    Kernel { bandwidth: Option<f64> },
}

impl Default for DensityMethod {
    fn default() -> Self {
        DensityMethod::Kernel { bandwidth: None }
    }
}

/// lfdr estimated against an empirical (or fixed) null.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLfdr {
    pub lfdr: LfdrVector,
    /// Indices where the estimated mixture density was zero; their lfdr is set to 1.
    pub flagged: Vec<usize>,
}

/// `pi0 f0(z) / f_hat(z)` clamped to `[0, 1]`, with `f0 = N(delta0, sigma0^2)`.
pub fn lfdr_empirical(
    z: &[f64],
    null: &EmpiricalNull,
    method: &DensityMethod,
) -> Result<EmpiricalLfdr> {
    check_finite(z)?;
    let density = match method {
        DensityMethod::Mixture { seed } => {
            let fit = fit_mixture_em(z, &MixtureFitOptions::with_seed(*seed))?;
            z.iter().map(|&x| fit.mixture.density(x)).collect()
        }
        DensityMethod::Kernel { bandwidth } => {
            let h = match bandwidth {
                Some(h) => *h,
                None => silverman_bandwidth(z)?,
            };
            Kde::new(z, h)?.evaluate(z)
        }
    };
    lfdr_from_density(z, null, &density)
}

/// lfdr given the null and precomputed mixture-density values at each `z`.
pub fn lfdr_from_density(
    z: &[f64],
    null: &EmpiricalNull,
    density: &[f64],
) -> Result<EmpiricalLfdr> {
    check_finite(z)?;
    if density.len() != z.len() {
        return domain("density vector length differs from z");
    }
    let f0 = null.gaussian();
    let mut flagged = Vec::new();
    let values = z
        .iter()
        .zip(density)
        .enumerate()
        .map(|(i, (&zi, &fi))| {
            if !(fi > 0.0) || !fi.is_finite() {
                flagged.push(i);
                return 1.0;
            }
            let v = (null.pi0.ln() + f0.ln_pdf(zi) - fi.ln()).exp();
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(EmpiricalLfdr {
        lfdr: LfdrVector::new(values)?,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_only_model_gives_unit_lfdr() {
        let model = TwoGroupModel::standard(0.0, -2.0).unwrap();
        let lfdr = lfdr_oracle(&[-5.0, 0.0, 3.0], &model).unwrap();
        assert_eq!(lfdr.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn lfdr_at_zero_matches_direct_density_ratio() {
        let model = TwoGroupModel::standard(0.2, -2.0).unwrap();
        let lfdr = lfdr_oracle(&[0.0], &model).unwrap();
        // 0.8 phi(0) / (0.8 phi(0) + 0.2 phi(2)), evaluated independently.
        assert!((lfdr.values()[0] - 0.967273443634614).abs() < 1e-13);
    }

    #[test]
    fn lfdr_vanishes_deep_in_the_alternative_tail() {
        let model = TwoGroupModel::standard(0.2, -2.0).unwrap();
        let v = lfdr_oracle(&[-8.0, -20.0, -40.0], &model).unwrap();
        assert!(v.values()[0] < 1e-5);
        assert!(v.values()[2] < v.values()[1] || v.values()[2] == 0.0);
        assert!(lfdr_oracle(&[f64::NAN], &model).is_err());
    }

    #[test]
    fn pvalues() {
        let n01 = Gaussian::standard();
        assert_eq!(pvalue_from_z(&[0.0], &n01).unwrap()[0], 1.0);
        let p = pvalue_from_z(&[1.959964], &n01).unwrap()[0];
        assert!((p - 0.05).abs() < 1e-6);
        let shifted = pvalue_from_z(&[2.0], &Gaussian::new(1.0, 1.0).unwrap()).unwrap()[0];
        let plain = pvalue_from_z(&[1.0], &n01).unwrap()[0];
        assert_eq!(shifted, plain);
        assert!(pvalue_from_z(&[f64::INFINITY], &n01).is_err());
        assert!(pvalue_from_z(&[60.0], &n01).unwrap()[0] > 0.0);
        let lower = pvalue_from_z_sided(&[-1.959964, 1.0], &n01, PValueSide::Lower).unwrap();
        assert!((lower[0] - 0.025).abs() < 1e-6);
        let upper = pvalue_from_z_sided(&[1.0], &n01, PValueSide::Upper).unwrap();
        assert!((lower[1] + upper[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_is_stable_for_ties() {
        let v = LfdrVector::new(vec![0.5, 0.1, 0.5, 0.1, 0.0]).unwrap();
        assert_eq!(v.rank(), &[4, 1, 3, 0, 2]);
        assert_eq!(v.positions(), vec![4, 2, 5, 3, 1]);
        assert_eq!(v.sorted_values(), vec![0.0, 0.1, 0.1, 0.5, 0.5]);
        assert!(LfdrVector::new(vec![1.2]).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(TwoGroupModel::standard(1.0, -2.0).is_err());
        assert!(TwoGroupModel::new(
            0.3,
            Gaussian::standard(),
            vec![WeightedGaussian {
                weight: 0.6,
                mean: 1.0,
                sd: 1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn zero_density_is_flagged_and_clamped() {
        let null = EmpiricalNull {
            delta0: 0.0,
            sigma0: 1.0,
            pi0: 0.9,
        };
        let out = lfdr_from_density(&[0.0, 1.0], &null, &[0.0, 10.0]).unwrap();
        assert_eq!(out.flagged, vec![0]);
        assert_eq!(out.lfdr.values()[0], 1.0);
        assert!(out.lfdr.values()[1] < 0.03);
    }
}
