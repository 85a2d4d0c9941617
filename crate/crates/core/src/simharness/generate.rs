//! Data generators for the simulation designs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    Iid,
    Equicorr,
    Hierarchical,
}

/// One simulated experiment: z-values and the true states (`true` = non-null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDataset {
    pub z: Vec<f64>,
    pub theta: Vec<bool>,
    pub scenario: ScenarioTag,
    pub seed: u64,
    /// Shared latent draw: `W` for equicorrelated data, `mu0` for hierarchical data.
    pub latent: Option<f64>,
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn non_null_count(&self) -> usize {
        self.theta.iter().filter(|&&t| t).count()
    }
}

fn check(m: usize, pi: f64, mu: f64) -> Result<()> {
    if m == 0 {
        return domain("need at least one hypothesis");
    }
    if !(0.0..=1.0).contains(&pi) {
        return domain(format!("pi must lie in [0, 1], got {pi}"));
    }
    if !mu.is_finite() {
        return domain("mu must be finite");
    }
    Ok(())
}

/// `theta_i ~ Bernoulli(pi)`, `z_i ~ N(mu theta_i, 1)`.
pub fn gen_iid(m: usize, pi: f64, mu: f64, seed: u64) -> Result<SimulatedDataset> {
    check(m, pi, mu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for _ in 0..m {
        let t = rng.random::<f64>() < pi;
        let e: f64 = rng.sample(StandardNormal);
        z.push(if t { mu + e } else { e });
        theta.push(t);
    }
    Ok(SimulatedDataset {
        z,
        theta,
        scenario: ScenarioTag::Iid,
        seed,
        latent: None,
    })
}

/// `z_i = mu theta_i + sqrt(rho) W + sqrt(1 - rho) zeta_i` with one shared `W`.
pub fn gen_equicorr(m: usize, pi: f64, mu: f64, rho: f64, seed: u64) -> Result<SimulatedDataset> {
    check(m, pi, mu)?;
    if !(0.0..1.0).contains(&rho) {
        return domain(format!("rho must lie in [0, 1), got {rho}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: f64 = rng.sample(StandardNormal);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut z = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for _ in 0..m {
        let t = rng.random::<f64>() < pi;
        let e: f64 = rng.sample(StandardNormal);
        z.push(if t { mu } else { 0.0 } + a * w + b * e);
        theta.push(t);
    }
    Ok(SimulatedDataset {
        z,
        theta,
        scenario: ScenarioTag::Equicorr,
        seed,
        latent: Some(w),
    })
}

/// Hierarchical design with one observation per test.
pub fn gen_hierarchical(m: usize, seed: u64) -> Result<SimulatedDataset> {
    gen_hierarchical_with(m, 1, seed)
}

/// Each test summarises `n_obs` observations as `z = sqrt(n_obs) * mean`.
///
/// Per dataset `mu0 ~ U[-0.1, 0.1]`. Null observations are `N(mu0, 1)`;
/// 10% of tests are non-null with observation mean `+0.25` or `-0.25` (equal
/// split). So null z-values are `N(sqrt(n) mu0, 1)` and share a perturbation
/// whose induced correlation is `n var(mu0) / (n var(mu0) + 1)`.
pub fn gen_hierarchical_with(m: usize, n_obs: usize, seed: u64) -> Result<SimulatedDataset> {
    check(m, 0.1, 0.0)?;
    if n_obs == 0 {
        return domain("need at least one observation per test");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu0 = rng.random_range(-0.1..=0.1);
    let scale = (n_obs as f64).sqrt();
    let mut z = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for _ in 0..m {
        let t = rng.random::<f64>() < 0.1;
        let mean = if !t {
            mu0
        } else if rng.random::<bool>() {
            0.25
        } else {
            -0.25
        };
        let e: f64 = rng.sample(StandardNormal);
        z.push(scale * mean + e);
        theta.push(t);
    }
    Ok(SimulatedDataset {
        z,
        theta,
        scenario: ScenarioTag::Hierarchical,
        seed,
        latent: Some(mu0),
    })
}
