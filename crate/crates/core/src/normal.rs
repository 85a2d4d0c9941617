//! Gaussian helpers built on the complementary error function.
//!
//! `erfc` comes from `libm`, which is accurate to a few ulps across the range;
//! the p-value and truncated-likelihood code relies on that in the tails.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `Phi(x)`, accurate in both tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `1 - Phi(x)`, accurate in the upper tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// A univariate normal distribution `N(mean, sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() {
            return domain(format!("gaussian mean must be finite, got {mean}"));
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return domain(format!("gaussian sd must be positive, got {sd}"));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        std_normal_ln_pdf((x - self.mean) / self.sd) - self.sd.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mean) / self.sd)
    }
}
