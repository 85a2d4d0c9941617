//! Empirical-null estimation from the central bulk of the z-values.
//!
//! The window is a symmetric interval around the density mode holding a given
//! fraction of the data. Inside it the null is fitted either by maximum
//! likelihood for a truncated Gaussian, or by central matching (a quadratic
//! fit to the log histogram).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::kde::{silverman_bandwidth, Kde};
use super::Gaussian;
use crate::error::{domain, FdxError, Result};
use crate::normal::std_normal_cdf;
use crate::numeric::sorted_quantile;

pub const DEFAULT_CENTRAL_FRACTION: f64 = 0.8;
const MIN_POINTS: usize = 200;
const MIN_WINDOW_POINTS: usize = 100;

/// Estimated null `N(delta0, sigma0^2)` and null proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNull {
    pub delta0: f64,
    pub sigma0: f64,
    pub pi0: f64,
}

impl EmpiricalNull {
    pub fn gaussian(&self) -> Gaussian {
        Gaussian {
            mean: self.delta0,
            sd: self.sigma0,
        }
    }

    /// `N(0, 1)` null with `pi0` read off the central window around zero.
    pub fn theoretical(z: &[f64], central_fraction: f64) -> Result<Self> {
        check_input(z, central_fraction)?;
        let mut sorted = z.to_vec();
        sorted.sort_by(f64::total_cmp);
        let window = Window::around(&sorted, 0.0, central_fraction)?;
        let pi0 = window.null_proportion(sorted.len(), 0.0, 1.0);
        Ok(Self {
            delta0: 0.0,
            sigma0: 1.0,
            pi0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullFitMethod {
    /// Truncated-Gaussian maximum likelihood.
    #[default]
    Mle,
    /// Quadratic fit to the log histogram.
    CentralMatching,
}

/// MLE empirical null on the central `central_fraction` of the data.
pub fn fit_empirical_null(z: &[f64], central_fraction: f64) -> Result<EmpiricalNull> {
    fit_empirical_null_with(z, central_fraction, NullFitMethod::Mle)
}

pub fn fit_empirical_null_with(
    z: &[f64],
    central_fraction: f64,
    method: NullFitMethod,
) -> Result<EmpiricalNull> {
    check_input(z, central_fraction)?;
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mode = density_mode(&sorted)?;
    let window = Window::around(&sorted, mode, central_fraction)?;
    let (delta0, sigma0) = match method {
        NullFitMethod::Mle => truncated_mle(&window)?,
        NullFitMethod::CentralMatching => central_matching(&window)?,
    };
    if !(sigma0 > 0.0 && sigma0.is_finite() && delta0.is_finite()) {
        return Err(FdxError::Estimation(format!(
            "empirical null fit diverged (delta0 = {delta0}, sigma0 = {sigma0})"
        )));
    }
    let pi0 = window.null_proportion(sorted.len(), delta0, sigma0);
    Ok(EmpiricalNull {
        delta0,
        sigma0,
        pi0,
    })
}

fn check_input(z: &[f64], central_fraction: f64) -> Result<()> {
    if z.len() < MIN_POINTS {
        return domain(format!(
            "empirical null needs at least {MIN_POINTS} z-values, got {}",
            z.len()
        ));
    }
    if !(central_fraction > 0.2 && central_fraction <= 0.9) {
        return domain(format!(
            "central fraction must lie in (0.2, 0.9], got {central_fraction}"
        ));
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return domain(format!("z-value {v} is not finite"));
    }
    Ok(())
}

/// Maximiser of the kernel density estimate over the interdecile range.
fn density_mode(sorted: &[f64]) -> Result<f64> {
    let h = silverman_bandwidth(sorted)
        .map_err(|e| FdxError::Estimation(format!("cannot locate the null mode: {e}")))?;
    let kde = Kde::new(sorted, h)?;
    let lo = sorted_quantile(sorted, 0.1);
    let hi = sorted_quantile(sorted, 0.9);
    let grid: Vec<f64> = (0..=400)
        .map(|i| lo + (hi - lo) * i as f64 / 400.0)
        .collect();
    let dens = kde.evaluate(&grid);
    let best = (0..grid.len())
        .max_by(|&a, &b| dens[a].total_cmp(&dens[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    Ok(grid[best])
}

/// Data inside `[lo, hi]`, summarised by centred sufficient statistics.
struct Window<'a> {
    points: &'a [f64],
    lo: f64,
    hi: f64,
    center: f64,
    s1: f64,
    s2: f64,
}

impl<'a> Window<'a> {
    fn around(sorted: &'a [f64], center: f64, fraction: f64) -> Result<Self> {
        let mut dist: Vec<f64> = sorted.iter().map(|v| (v - center).abs()).collect();
        dist.sort_by(f64::total_cmp);
        let half = sorted_quantile(&dist, fraction);
        let (lo, hi) = (center - half, center + half);
        let a = sorted.partition_point(|&v| v < lo);
        let b = sorted.partition_point(|&v| v <= hi);
        let points = &sorted[a..b];
        if points.len() < MIN_WINDOW_POINTS || !(half > 0.0) {
            return Err(FdxError::Estimation(format!(
                "only {} z-values fall in the central window",
                points.len()
            )));
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for &v in points {
            let d = v - center;
            s1 += d;
            s2 += d * d;
        }
        Ok(Self {
            points,
            lo,
            hi,
            center,
            s1,
            s2,
        })
    }

    fn n(&self) -> f64 {
        self.points.len() as f64
    }

    fn mass(&self, delta: f64, sigma: f64) -> f64 {
        std_normal_cdf((self.hi - delta) / sigma) - std_normal_cdf((self.lo - delta) / sigma)
    }

    /// `N0 / (N P(window))`, capped at one.
    fn null_proportion(&self, total: usize, delta: f64, sigma: f64) -> f64 {
        let p = self.mass(delta, sigma);
        if !(p > 0.0) {
            return 1.0;
        }
        (self.n() / (total as f64 * p)).min(1.0)
    }

    /// Negative truncated-Gaussian log-likelihood up to a constant.
    fn nll(&self, delta: f64, ln_sigma: f64) -> f64 {
        let sigma = ln_sigma.exp();
        let d = delta - self.center;
        let n = self.n();
        let ss = self.s2 - 2.0 * d * self.s1 + n * d * d;
        let mass = self.mass(delta, sigma);
        if !(mass > 0.0) {
            return f64::INFINITY;
        }
        0.5 * ss / (sigma * sigma) + n * ln_sigma + n * mass.ln()
    }
}

fn truncated_mle(w: &Window) -> Result<(f64, f64)> {
    let n = w.n();
    let mean = w.s1 / n;
    let var = (w.s2 / n - mean * mean).max(1e-12);
    let start = [w.center + mean, (var.sqrt() * 1.5).ln()];
    let best = nelder_mead(|x| w.nll(x[0], x[1]), start, [0.1, 0.1], 1e-12, 2_000);
    let (delta, sigma) = (best[0], best[1].exp());
    let width = w.hi - w.lo;
    if (delta - w.center).abs() > width || sigma > 10.0 * width {
        return Err(FdxError::Estimation(
            "truncated-Gaussian fit ran away from the central window".to_string(),
        ));
    }
    Ok((delta, sigma))
}

fn central_matching(w: &Window) -> Result<(f64, f64)> {
    let bins = 30;
    let width = (w.hi - w.lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in w.points {
        let j = (((v - w.lo) / width) as usize).min(bins - 1);
        counts[j] += 1.0;
    }
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for (j, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let x = w.lo + (j as f64 + 0.5) * width - w.center;
        let row = Vector3::new(1.0, x, x * x);
        xtx += c * row * row.transpose();
        xty += c * c.ln() * row;
    }
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| FdxError::Estimation("central matching system is singular".into()))?;
    if !(beta[2] < 0.0) {
        return Err(FdxError::Estimation(
            "log histogram is not concave in the central window".into(),
        ));
    }
    let var = -0.5 / beta[2];
    Ok((w.center + beta[1] * var, var.sqrt()))
}

/// Minimal Nelder-Mead simplex search in two dimensions.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: F,
    start: [f64; 2],
    step: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> [f64; 2] {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= tol * (values[0].abs() + tol) {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            (simplex[2], values[2]) = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        0.5 * (simplex[0][0] + simplex[i][0]),
                        0.5 * (simplex[0][1] + simplex[i][1]),
                    ];
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    simplex[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sample(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let x = nelder_mead(
            |p| (p[0] - 1.5).powi(2) + 3.0 * (p[1] + 0.5).powi(2),
            [0.0, 0.0],
            [0.3, 0.3],
            1e-15,
            5_000,
        );
        assert!(
            (x[0] - 1.5).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5,
            "{x:?}"
        );
    }

    #[test]
    fn recovers_shifted_and_scaled_null() {
        let z = sample(100_000, 0.5, 1.2, 21);
        let fit = fit_empirical_null(&z, DEFAULT_CENTRAL_FRACTION).unwrap();
        assert!((fit.delta0 - 0.5).abs() <= 0.02, "{fit:?}");
        assert!((fit.sigma0 - 1.2).abs() <= 0.02, "{fit:?}");
        assert!(fit.pi0 >= 0.98, "{fit:?}");
    }

    #[test]
    fn standard_data_gives_theoretical_null() {
        let z = sample(100_000, 0.0, 1.0, 2);
        for method in [NullFitMethod::Mle, NullFitMethod::CentralMatching] {
            let fit = fit_empirical_null_with(&z, DEFAULT_CENTRAL_FRACTION, method).unwrap();
            assert!(fit.delta0.abs() <= 0.02, "{method:?} {fit:?}");
            assert!((fit.sigma0 - 1.0).abs() <= 0.02, "{method:?} {fit:?}");
        }
    }

    #[test]
    fn far_outliers_barely_move_the_fit() {
        let mut z = sample(50_000, 0.0, 1.0, 3);
        let clean = fit_empirical_null(&z, DEFAULT_CENTRAL_FRACTION).unwrap();
        let extra = z.len() / 19;
        z.extend(std::iter::repeat_n(-4.0, extra));
        let dirty = fit_empirical_null(&z, DEFAULT_CENTRAL_FRACTION).unwrap();
        assert!((clean.delta0 - dirty.delta0).abs() < 0.05);
        assert!((clean.sigma0 - dirty.sigma0).abs() < 0.05);
        assert!(dirty.pi0 < clean.pi0);
    }

    #[test]
    fn input_validation() {
        let z = sample(500, 0.0, 1.0, 4);
        assert!(fit_empirical_null(&z[..100], 0.5).is_err());
        assert!(fit_empirical_null(&z, 0.2).is_err());
        assert!(fit_empirical_null(&z, 0.95).is_err());
        assert!(fit_empirical_null(&z, 0.5).is_ok());
        let theo = EmpiricalNull::theoretical(&z, 0.5).unwrap();
        assert_eq!((theo.delta0, theo.sigma0), (0.0, 1.0));
        assert!(theo.pi0 > 0.8 && theo.pi0 <= 1.0);
    }
}
