//! Gaussian kernel density estimation.
//!
//! Small inputs are evaluated directly; larger ones go through linear binning
//! on a regular grid followed by a discrete convolution and linear
//! interpolation back to the query points.

use crate::error::{domain, Result};
use crate::normal::std_normal_ln_pdf;
use crate::numeric::{sample_sd, sorted_quantile};

const GRID_SIZE: usize = 2048;
const DIRECT_LIMIT: usize = 2_000;
/// Kernel support in bandwidths; `phi(8)` is below 1e-14.
const CUTOFF: f64 = 8.0;

/// Silverman's rule of thumb `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    if data.len() < 2 {
        return domain("bandwidth selection needs at least two points");
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = sample_sd(&sorted);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (sorted.len() as f64).powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return domain("data have no spread; bandwidth is zero");
    }
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    pub fn new(data: &[f64], bandwidth: f64) -> Result<Self> {
        if data.is_empty() {
            return domain("kernel density estimate needs data");
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return domain(format!("bandwidth must be positive, got {bandwidth}"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("kernel density data must be finite");
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn evaluate(&self, points: &[f64]) -> Vec<f64> {
        if self.sorted.len() <= DIRECT_LIMIT {
            points.iter().map(|&x| self.evaluate_direct(x)).collect()
        } else {
            self.evaluate_binned(points)
        }
    }

    /// Exact sum over the data within the kernel cutoff.
    pub fn evaluate_direct(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < x - CUTOFF * h);
        let hi = self.sorted.partition_point(|&v| v <= x + CUTOFF * h);
        let s: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&v| std_normal_ln_pdf((x - v) / h).exp())
            .sum();
        s / (self.sorted.len() as f64 * h)
    }

    fn evaluate_binned(&self, points: &[f64]) -> Vec<f64> {
        let h = self.bandwidth;
        let n = self.sorted.len() as f64;
        let lo = self.sorted[0] - CUTOFF * h;
        let hi = self.sorted[self.sorted.len() - 1] + CUTOFF * h;
        let step = (hi - lo) / (GRID_SIZE - 1) as f64;

        let mut counts = vec![0.0; GRID_SIZE];
        for &v in &self.sorted {
            let pos = (v - lo) / step;
            let j = (pos.floor() as usize).min(GRID_SIZE - 2);
            let frac = pos - j as f64;
            counts[j] += 1.0 - frac;
            counts[j + 1] += frac;
        }

        let reach = ((CUTOFF * h / step).ceil() as usize).min(GRID_SIZE - 1);
        let kernel: Vec<f64> = (0..=reach)
            .map(|d| std_normal_ln_pdf(d as f64 * step / h).exp() / (n * h))
            .collect();
        let mut grid = vec![0.0; GRID_SIZE];
        for (j, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let a = j.saturating_sub(reach);
            let b = (j + reach).min(GRID_SIZE - 1);
            for (i, g) in grid[a..=b].iter_mut().enumerate() {
                *g += c * kernel[(a + i).abs_diff(j)];
            }
        }

        points
            .iter()
            .map(|&x| {
                let pos = (x - lo) / step;
                if !(0.0..=(GRID_SIZE - 1) as f64).contains(&pos) {
                    return self.evaluate_direct(x);
                }
                let j = (pos.floor() as usize).min(GRID_SIZE - 2);
                let frac = pos - j as f64;
                grid[j] * (1.0 - frac) + grid[j + 1] * frac
            })
            .collect()
    }
}
