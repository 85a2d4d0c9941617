//! Univariate Gaussian-mixture EM with BIC model selection.
//!
//! Starts come from 1-D k-means: the first from an equal-count quantile split,
//! the rest from random data points. Every start gets a short EM burn-in; the
//! best one by log-likelihood is then iterated to convergence, falling back to
//! the next start if it degenerates.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TwoGroupModel, WeightedGaussian};
use crate::error::{domain, FdxError, Result};
use crate::normal::{std_normal_ln_pdf, LN_SQRT_2PI};
use crate::numeric::{derive_seed, sorted_quantile};

const MAX_COMPONENTS: usize = 4;
const MIN_POINTS: usize = 50;

/// Covariance structure of the mixture components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// One variance shared by all components.
    Equal,
    /// A separate variance per component.
    Unequal,
}

impl VarianceModel {
    fn n_params(self, g: usize) -> usize {
        match self {
            VarianceModel::Equal => 2 * g,
            VarianceModel::Unequal => 3 * g - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFitOptions {
    /// Component counts considered by BIC.
    pub candidates: Vec<usize>,
    /// Variance structures considered by BIC.
    pub variance_models: Vec<VarianceModel>,
    /// Number of starts per component count.
    pub restarts: usize,
    pub burn_in: usize,
    pub max_iter: usize,
    /// Relative log-likelihood change treated as convergence.
    pub tol: f64,
    pub seed: u64,
}

impl Default for MixtureFitOptions {
    fn default() -> Self {
        Self {
            candidates: vec![1, 2, 3, 4],
            variance_models: vec![VarianceModel::Unequal],
            restarts: 5,
            burn_in: 20,
            max_iter: 5000,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl MixtureFitOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// A fitted univariate Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<WeightedGaussian>,
    pub variance_model: VarianceModel,
    pub log_likelihood: f64,
    pub bic: f64,
    pub iterations: usize,
}

impl GaussianMixture {
    pub fn ln_density(&self, x: f64) -> f64 {
        let mut terms = [f64::NEG_INFINITY; MAX_COMPONENTS];
        for (t, c) in terms.iter_mut().zip(&self.components) {
            *t = c.weight.ln() + c.gaussian().ln_pdf(x);
        }
        crate::numeric::log_sum_exp(&terms[..self.components.len()])
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }
}

/// Result of [`fit_mixture_em`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    /// Two-group model with the heaviest component as the null.
    pub model: TwoGroupModel,
    pub mixture: GaussianMixture,
    pub null_component: usize,
    /// `(G, variance model, BIC)` for every candidate that produced a
    /// non-degenerate fit.
    pub bic_by_components: Vec<(usize, VarianceModel, f64)>,
}

/// Fit mixtures for every candidate `G`, keep the lowest BIC, and read off the
/// two-group model whose null is the component with the largest weight.
pub fn fit_mixture_em(z: &[f64], opts: &MixtureFitOptions) -> Result<MixtureFit> {
    if z.len() < MIN_POINTS {
        return domain(format!(
            "mixture fitting needs at least {MIN_POINTS} z-values, got {}",
            z.len()
        ));
    }
    if opts.candidates.is_empty()
        || opts
            .candidates
            .iter()
            .any(|&g| g == 0 || g > MAX_COMPONENTS)
    {
        return domain(format!(
            "component candidates must lie in 1..={MAX_COMPONENTS}, got {:?}",
            opts.candidates
        ));
    }
    if opts.variance_models.is_empty() {
        return domain("at least one variance model is required");
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return domain(format!("z-value {v} is not finite"));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut best: Option<GaussianMixture> = None;
    let mut bic_by_components = Vec::new();
    for &g in &opts.candidates {
        for &model in &opts.variance_models {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, g as u64));
            let Ok(fit) = fit_sorted(&sorted, g, model, opts, &mut rng) else {
                continue;
            };
            bic_by_components.push((g, model, fit.bic));
            if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                best = Some(fit);
            }
        }
    }
    let mixture = best
        .ok_or_else(|| FdxError::Estimation("every candidate mixture degenerated".to_string()))?;

    let median = sorted_quantile(&sorted, 0.5);
    let null_component = heaviest_component(&mixture.components, median);
    let null = mixture.components[null_component];
    let pi = 1.0 - null.weight;
    let alternatives: Vec<WeightedGaussian> = mixture
        .components
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != null_component)
        .map(|(_, c)| WeightedGaussian {
            weight: c.weight / pi,
            ..*c
        })
        .collect();
    let model = if alternatives.is_empty() || pi <= 0.0 {
        TwoGroupModel::new(0.0, null.gaussian(), Vec::new())?
    } else {
        TwoGroupModel::new(pi.min(1.0 - f64::EPSILON), null.gaussian(), alternatives)?
    };
    Ok(MixtureFit {
        model,
        mixture,
        null_component,
        bic_by_components,
    })
}

/// Largest weight; near-ties go to the component whose mean is closest to the median.
fn heaviest_component(components: &[WeightedGaussian], median: f64) -> usize {
    let mut best = 0;
    for (i, c) in components.iter().enumerate().skip(1) {
        let b = &components[best];
        if c.weight > b.weight + 1e-9
            || ((c.weight - b.weight).abs() <= 1e-9
                && (c.mean - median).abs() < (b.mean - median).abs())
        {
            best = i;
        }
    }
    best
}

/// Fit a `g`-component mixture with `opts.restarts` starts.
pub fn fit_gaussian_mixture(
    z: &[f64],
    g: usize,
    model: VarianceModel,
    opts: &MixtureFitOptions,
) -> Result<GaussianMixture> {
    if g == 0 || g > MAX_COMPONENTS || z.len() < 2 * g {
        return domain(format!("cannot fit {g} components to {} points", z.len()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, g as u64));
    fit_sorted(&sorted, g, model, opts, &mut rng)
}

fn fit_sorted(
    sorted: &[f64],
    g: usize,
    model: VarianceModel,
    opts: &MixtureFitOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GaussianMixture> {
    let n = sorted.len();
    let stats = PrefixStats::new(sorted);
    let (total_mean, total_var) = stats.moments(0, n);
    let scale = total_var.sqrt();
    if !(scale > 0.0) {
        return Err(FdxError::Estimation("z-values have zero spread".into()));
    }
    let n_params = model.n_params(g) as f64;
    if g == 1 {
        let sd = (total_var * (n - 1) as f64 / n as f64).sqrt();
        let comp = [Component {
            weight: 1.0,
            mean: total_mean,
            sd,
        }];
        let ll = log_likelihood(sorted, &comp);
        return Ok(finish(&comp, model, ll, n_params, n, 0));
    }
    let equal = model == VarianceModel::Equal;

    let min_sd = 1e-3 * scale;
    let mut starts = Vec::new();
    for r in 0..opts.restarts.max(1) {
        let centers = if r == 0 {
            quantile_centers(&stats, g)
        } else {
            let mut c: Vec<f64> = sample(rng, n, g).iter().map(|i| sorted[i]).collect();
            c.sort_by(f64::total_cmp);
            c
        };
        let Some(mut init) = kmeans_start(sorted, &stats, centers, min_sd) else {
            continue;
        };
        if equal {
            let var = init.iter().map(|c| c.weight * c.sd * c.sd).sum::<f64>();
            init.iter_mut().for_each(|c| c.sd = var.sqrt());
        }
        let mut state = EmState::new(init, equal);
        if state.run(sorted, opts.burn_in, opts.tol, min_sd) {
            starts.push(state);
        }
    }
    starts.sort_by(|a, b| b.ll.total_cmp(&a.ll));
    for mut state in starts {
        let remaining = opts.max_iter.saturating_sub(state.iterations);
        if state.run_accelerated(sorted, remaining, opts.tol, min_sd) {
            let ll = log_likelihood(sorted, &state.comps);
            let mut comps = state.comps.clone();
            comps.sort_by(|a, b| a.mean.total_cmp(&b.mean));
            return Ok(finish(&comps, model, ll, n_params, n, state.iterations));
        }
    }
    Err(FdxError::Estimation(format!(
        "all {} starts of the {g}-component mixture degenerated",
        opts.restarts.max(1)
    )))
}

fn finish(
    comps: &[Component],
    variance_model: VarianceModel,
    ll: f64,
    n_params: f64,
    n: usize,
    iterations: usize,
) -> GaussianMixture {
    GaussianMixture {
        components: comps
            .iter()
            .map(|c| WeightedGaussian {
                weight: c.weight,
                mean: c.mean,
                sd: c.sd,
            })
            .collect(),
        variance_model,
        log_likelihood: ll,
        bic: -2.0 * ll + n_params * (n as f64).ln(),
        iterations,
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    weight: f64,
    mean: f64,
    sd: f64,
}

fn log_terms(x: f64, comps: &[Component], out: &mut [f64; MAX_COMPONENTS]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (t, c) in out.iter_mut().zip(comps) {
        *t = c.weight.ln() + std_normal_ln_pdf((x - c.mean) / c.sd) - c.sd.ln();
        max = max.max(*t);
    }
    max
}

fn log_likelihood(x: &[f64], comps: &[Component]) -> f64 {
    let mut terms = [0.0; MAX_COMPONENTS];
    let mut ll = 0.0;
    for &xi in x {
        let max = log_terms(xi, comps, &mut terms);
        let s: f64 = terms[..comps.len()].iter().map(|t| (t - max).exp()).sum();
        ll += max + s.ln();
    }
    ll
}

/// One EM update. Returns the updated components and the log-likelihood of
/// the input, or `None` if a component collapsed.
fn em_step(
    x: &[f64],
    comps: &[Component],
    equal: bool,
    min_sd: f64,
) -> Option<(Vec<Component>, f64)> {
    let g = comps.len();
    let n = x.len() as f64;
    let mut offset = [0.0; MAX_COMPONENTS];
    let mut inv_sd = [0.0; MAX_COMPONENTS];
    for (k, c) in comps.iter().enumerate() {
        offset[k] = c.weight.ln() - c.sd.ln() - LN_SQRT_2PI;
        inv_sd[k] = 1.0 / c.sd;
    }
    let mut terms = [0.0; MAX_COMPONENTS];
    let mut r_sum = [0.0; MAX_COMPONENTS];
    let mut rx_sum = [0.0; MAX_COMPONENTS];
    let mut rxx_sum = [0.0; MAX_COMPONENTS];
    let mut ll = 0.0;
    for &xi in x {
        let mut max = f64::NEG_INFINITY;
        for k in 0..g {
            let u = (xi - comps[k].mean) * inv_sd[k];
            terms[k] = offset[k] - 0.5 * u * u;
            max = max.max(terms[k]);
        }
        let mut s = 0.0;
        for t in terms[..g].iter_mut() {
            *t = (*t - max).exp();
            s += *t;
        }
        ll += max + s.ln();
        let inv_s = 1.0 / s;
        for k in 0..g {
            let r = terms[k] * inv_s;
            let d = xi - comps[k].mean;
            r_sum[k] += r;
            rx_sum[k] += r * d;
            rxx_sum[k] += r * d * d;
        }
    }
    let mut out = Vec::with_capacity(g);
    let mut pooled = 0.0;
    for k in 0..g {
        if !(r_sum[k] >= 2.0) {
            return None;
        }
        let shift = rx_sum[k] / r_sum[k];
        let ss = (rxx_sum[k] - shift * rx_sum[k]).max(0.0);
        pooled += ss;
        out.push(Component {
            weight: r_sum[k] / n,
            mean: comps[k].mean + shift,
            sd: (ss / r_sum[k]).sqrt(),
        });
    }
    if equal {
        let sd = (pooled / n).sqrt();
        out.iter_mut().for_each(|c| c.sd = sd);
    }
    out.iter().all(|c| c.sd >= min_sd).then_some((out, ll))
}

fn coords(c: &Component) -> [f64; 3] {
    [c.weight, c.mean, c.sd.ln()]
}

/// SQUAREM step length `-|r| / |v|`, at most -1.
fn squarem_step(p0: &[Component], p1: &[Component], p2: &[Component]) -> Option<f64> {
    let (mut rr, mut vv) = (0.0, 0.0);
    for k in 0..p0.len() {
        let (a, b, c) = (coords(&p0[k]), coords(&p1[k]), coords(&p2[k]));
        for j in 0..3 {
            let r = b[j] - a[j];
            let v = c[j] - 2.0 * b[j] + a[j];
            rr += r * r;
            vv += v * v;
        }
    }
    (vv > 0.0).then(|| -(rr / vv).sqrt().max(1.0))
}

/// Squared extrapolation in `(weight, mean, ln sd)` coordinates.
fn extrapolate(
    p0: &[Component],
    p1: &[Component],
    p2: &[Component],
    step: f64,
    min_sd: f64,
) -> Option<Vec<Component>> {
    let mut out = Vec::with_capacity(p0.len());
    let mut total = 0.0;
    for k in 0..p0.len() {
        let (a, b, c) = (coords(&p0[k]), coords(&p1[k]), coords(&p2[k]));
        let mut q = [0.0; 3];
        for j in 0..3 {
            let r = b[j] - a[j];
            let v = c[j] - 2.0 * b[j] + a[j];
            q[j] = a[j] - 2.0 * step * r + step * step * v;
        }
        let sd = q[2].exp();
        if !(q[0] > 0.0) || !(sd >= min_sd) || !q[1].is_finite() {
            return None;
        }
        total += q[0];
        out.push(Component {
            weight: q[0],
            mean: q[1],
            sd,
        });
    }
    for c in &mut out {
        c.weight /= total;
    }
    Some(out)
}

struct EmState {
    comps: Vec<Component>,
    equal: bool,
    ll: f64,
    iterations: usize,
}

impl EmState {
    fn new(comps: Vec<Component>, equal: bool) -> Self {
        Self {
            comps,
            equal,
            ll: f64::NEG_INFINITY,
            iterations: 0,
        }
    }

    /// Plain EM for up to `iters` steps; `false` if a component collapsed.
    fn run(&mut self, x: &[f64], iters: usize, tol: f64, min_sd: f64) -> bool {
        for _ in 0..iters {
            let Some((next, ll)) = em_step(x, &self.comps, self.equal, min_sd) else {
                return false;
            };
            self.iterations += 1;
            let prev = std::mem::replace(&mut self.ll, ll);
            self.comps = next;
            if converged(prev, ll, tol) {
                break;
            }
        }
        true
    }

    /// EM accelerated by squared extrapolation, with a fallback to the plain
    /// double step whenever the extrapolated point lowers the likelihood.
    fn run_accelerated(&mut self, x: &[f64], iters: usize, tol: f64, min_sd: f64) -> bool {
        let budget = self.iterations + iters;
        while self.iterations < budget {
            let Some((p1, ll0)) = em_step(x, &self.comps, self.equal, min_sd) else {
                return false;
            };
            let Some((p2, ll1)) = em_step(x, &p1, self.equal, min_sd) else {
                return false;
            };
            self.iterations += 2;
            let prev = std::mem::replace(&mut self.ll, ll1);
            if converged(prev, ll0, tol) || converged(ll0, ll1, tol) {
                self.comps = p2;
                break;
            }
            let mut next = p2;
            if let Some(mut step) = squarem_step(&self.comps, &p1, &next) {
                while step < -1.0 {
                    let jump = extrapolate(&self.comps, &p1, &next, step, min_sd)
                        .and_then(|q| em_step(x, &q, self.equal, min_sd));
                    if let Some((p3, llq)) = jump {
                        self.iterations += 1;
                        if llq >= ll1 {
                            self.ll = llq;
                            next = p3;
                            break;
                        }
                    }
                    step = (step - 1.0) / 2.0;
                    if step > -1.25 {
                        break;
                    }
                }
            }
            self.comps = next;
        }
        true
    }
}

fn converged(prev: f64, ll: f64, tol: f64) -> bool {
    prev.is_finite() && (ll - prev).abs() <= tol * ll.abs()
}

/// Prefix sums of `x` and `x^2` (centred) for O(1) range moments.
struct PrefixStats {
    center: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl PrefixStats {
    fn new(sorted: &[f64]) -> Self {
        let center = sorted[sorted.len() / 2];
        let mut s1 = Vec::with_capacity(sorted.len() + 1);
        let mut s2 = Vec::with_capacity(sorted.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &x in sorted {
            let d = x - center;
            a += d;
            b += d * d;
            s1.push(a);
            s2.push(b);
        }
        Self { center, s1, s2 }
    }

    /// Mean and unbiased variance of `sorted[lo..hi]`.
    fn moments(&self, lo: usize, hi: usize) -> (f64, f64) {
        let n = (hi - lo) as f64;
        let m1 = (self.s1[hi] - self.s1[lo]) / n;
        let m2 = (self.s2[hi] - self.s2[lo]) / n;
        let var = if hi - lo > 1 {
            (m2 - m1 * m1).max(0.0) * n / (n - 1.0)
        } else {
            0.0
        };
        (self.center + m1, var)
    }
}

fn quantile_centers(stats: &PrefixStats, g: usize) -> Vec<f64> {
    let n = stats.s1.len() - 1;
    (0..g)
        .map(|k| stats.moments(k * n / g, (k + 1) * n / g).0)
        .collect()
}

/// Lloyd iterations on sorted 1-D data; clusters are contiguous ranges.
fn kmeans_start(
    sorted: &[f64],
    stats: &PrefixStats,
    mut centers: Vec<f64>,
    min_sd: f64,
) -> Option<Vec<Component>> {
    let n = sorted.len();
    let g = centers.len();
    let mut bounds = vec![0; g + 1];
    for _ in 0..100 {
        bounds[0] = 0;
        bounds[g] = n;
        for k in 1..g {
            let mid = 0.5 * (centers[k - 1] + centers[k]);
            bounds[k] = sorted.partition_point(|&x| x < mid).max(bounds[k - 1]);
        }
        let mut moved = false;
        for k in 0..g {
            if bounds[k + 1] <= bounds[k] {
                return None;
            }
            let c = stats.moments(bounds[k], bounds[k + 1]).0;
            moved |= c != centers[k];
            centers[k] = c;
        }
        if !moved {
            break;
        }
    }
    let mut comps = Vec::with_capacity(g);
    for k in 0..g {
        let size = bounds[k + 1] - bounds[k];
        if size < 2 {
            return None;
        }
        let (mean, var) = stats.moments(bounds[k], bounds[k + 1]);
        comps.push(Component {
            weight: size as f64 / n as f64,
            mean,
            sd: var.sqrt().max(min_sd * 10.0),
        });
    }
    Some(comps)
}
