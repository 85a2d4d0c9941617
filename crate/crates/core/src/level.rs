//! Error-criterion parameters.
//!
//! FDX control at level `(gamma, alpha)` asks that `P(FDP > gamma) <= alpha`.
//! Whether `V` false discoveries out of `k` rejections exceed the tolerance is
//! decided on integers: `gamma` is held as a reduced fraction `num / den` and
//! `V > gamma * k` is evaluated as `V * den > num * k`. This keeps the boundary
//! case `gamma * k` integral (e.g. `gamma = 0.1, k = 30`) free of rounding.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Largest denominator accepted when reading `gamma` as a fraction.
const MAX_DENOMINATOR: u64 = 1_000_000_000_000;

/// Tolerated false discovery proportion `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FdpTolerance {
    num: u64,
    den: u64,
}

impl FdpTolerance {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return domain(format!("gamma must lie in (0, 1), got {gamma}"));
        }
        let (num, den) = nearest_fraction(gamma);
        Ok(Self { num, den })
    }

    pub fn gamma(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn as_fraction(&self) -> (u64, u64) {
        (self.num, self.den)
    }

    /// `floor(gamma * k)`: the most false discoveries among `k` rejections
    /// that do not push the FDP above `gamma`.
    pub fn tolerated_false(&self, k: usize) -> usize {
        ((self.num as u128 * k as u128) / self.den as u128) as usize
    }

    /// `false_count / max(rejections, 1) > gamma`.
    pub fn exceeded(&self, false_count: usize, rejections: usize) -> bool {
        rejections > 0 && false_count > self.tolerated_false(rejections)
    }
}

impl TryFrom<f64> for FdpTolerance {
    type Error = crate::FdxError;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FdpTolerance> for f64 {
    fn from(t: FdpTolerance) -> f64 {
        t.gamma()
    }
}

/// FDX level `(gamma, alpha)`, both strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdxLevel {
    pub gamma: FdpTolerance,
    pub alpha: f64,
}

impl FdxLevel {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        let gamma = FdpTolerance::new(gamma)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return domain(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        Ok(Self { gamma, alpha })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.gamma()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// FDR level implied by FDX control, `alpha + gamma * (1 - alpha)`.
    pub fn implied_fdr(&self) -> f64 {
        self.alpha + self.gamma() * (1.0 - self.alpha)
    }

    pub fn tolerated_false(&self, k: usize) -> usize {
        self.gamma.tolerated_false(k)
    }
}

/// Simplest fraction within `1e-12` of `x`, found by continued fractions.
fn nearest_fraction(x: f64) -> (u64, u64) {
    let tol = 1e-12 * x.abs().max(1e-300);
    let (mut h_prev, mut h) = (1u64, x.floor() as u64);
    let (mut k_prev, mut k) = (0u64, 1u64);
    let mut frac = x - x.floor();
    while (x - h as f64 / k as f64).abs() > tol && frac > 0.0 {
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as u64;
        let Some(h_next) = a.checked_mul(h).and_then(|v| v.checked_add(h_prev)) else {
            break;
        };
        let Some(k_next) = a.checked_mul(k).and_then(|v| v.checked_add(k_prev)) else {
            break;
        };
        if k_next > MAX_DENOMINATOR {
            break;
        }
        (h_prev, h, k_prev, k) = (h, h_next, k, k_next);
    }
    (h, k)
}
