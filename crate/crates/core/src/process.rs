//! The time-changed process Z(t) = W(Y(t)) and its d-dimensional version
//! X = (W₁(Y₁), …, W_d(Y_d)) with independent coordinates.
//!
//! Z is self-similar with index H/α. W is evaluated exactly at the realized
//! values of Y, never interpolated.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fbm::{fbm_covariance, fbm_values_at, ExactOptions, FbmSample, FbmSpec};
use crate::rng::{coordinate_stream, path_seed, stream, Role};
use crate::stable::{sample_stable_path_with, validate_grid, StableKind, StablePath, StableSpec};
use crate::stats::{ks_two_sample, ks_two_sample_critical, weighted_fit, LinearFit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProcessSpec {
    pub fbm: FbmSpec,
    pub stable: StableSpec,
    pub dim: usize,
}

impl ProcessSpec {
    pub fn new(fbm: FbmSpec, stable: StableSpec, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        Ok(Self { fbm, stable, dim })
    }

    /// Convenience constructor from raw parameters.
    pub fn from_parts(hurst: f64, alpha: f64, kind: StableKind, dim: usize) -> Result<Self> {
        Self::new(FbmSpec::new(hurst)?, StableSpec::new(alpha, 1.0, kind)?, dim)
    }

    pub fn hurst(&self) -> f64 {
        self.fbm.hurst()
    }

    pub fn alpha(&self) -> f64 {
        self.stable.alpha()
    }

    /// Self-similarity index H/α.
    pub fn index(&self) -> f64 {
        self.hurst() / self.alpha()
    }

    /// dH/α; local times exist in L² iff this is below 1.
    pub fn exponent(&self) -> f64 {
        self.dim as f64 * self.index()
    }

    pub fn local_time_exists(&self) -> bool {
        self.exponent() < 1.0
    }
}

/// One realization of X on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessPath {
    pub times: Vec<f64>,
    /// values[j][i] = X_j(times[i]).
    pub values: Vec<Vec<f64>>,
    pub stable_paths: Vec<StablePath>,
    pub fbm_samples: Vec<FbmSample>,
    /// dH/α of the generating spec.
    pub exponent: f64,
}

impl ProcessPath {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// X(times[i]) as a vector.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[i]).collect()
    }
}

/// W composed with a realized Y path: sort Y, draw W at the sorted values,
/// restore time order.
fn compose<R: Rng + ?Sized>(
    fbm: &FbmSpec,
    ys: &[f64],
    rng: &mut R,
    opts: ExactOptions,
) -> Result<(Vec<f64>, FbmSample)> {
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let w_sorted = fbm_values_at(fbm, &sorted, rng, opts)?;
    let mut out = vec![0.0; ys.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = w_sorted[k];
    }
    let mut sample = FbmSample { points: Vec::new(), values: Vec::new() };
    for (p, v) in sorted.into_iter().zip(w_sorted) {
        if sample.points.last() != Some(&p) {
            sample.points.push(p);
            sample.values.push(v);
        }
    }
    Ok((out, sample))
}

/// Sample X on `times`; coordinate j uses substreams (seed, j, stable) and
/// (seed, j, fbm).
pub fn sample_path(spec: &ProcessSpec, times: &[f64], seed: u64) -> Result<ProcessPath> {
    sample_path_with(spec, times, seed, ExactOptions::default())
}

pub fn sample_path_with(spec: &ProcessSpec, times: &[f64], seed: u64, opts: ExactOptions) -> Result<ProcessPath> {
    validate_grid(times)?;
    let mut values = Vec::with_capacity(spec.dim);
    let mut stable_paths = Vec::with_capacity(spec.dim);
    let mut fbm_samples = Vec::with_capacity(spec.dim);
    for j in 0..spec.dim as u64 {
        let mut rs = coordinate_stream(seed, j, Role::Stable);
        let mut rf = coordinate_stream(seed, j, Role::Fbm);
        let y = sample_stable_path_with(&spec.stable, times, &mut rs)?;
        let (x, w) = compose(&spec.fbm, &y.values, &mut rf, opts)?;
        values.push(x);
        stable_paths.push(y);
        fbm_samples.push(w);
    }
    Ok(ProcessPath { times: times.to_vec(), values, stable_paths, fbm_samples, exponent: spec.exponent() })
}

/// Values of the first coordinate only, without diagnostics.
pub fn sample_first_coordinate(spec: &ProcessSpec, times: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rs = coordinate_stream(seed, 0, Role::Stable);
    let mut rf = coordinate_stream(seed, 0, Role::Fbm);
    let y = sample_stable_path_with(&spec.stable, times, &mut rs)?;
    Ok(compose(&spec.fbm, &y.values, &mut rf, ExactOptions::default())?.0)
}

/// Z(t) for one coordinate: W at the single point Y(t).
pub fn sample_marginal<R: Rng + ?Sized>(spec: &ProcessSpec, t: f64, rng: &mut R) -> f64 {
    let y = spec.stable.sample(t, rng);
    y.abs().powf(spec.hurst()) * rng.sample::<f64, _>(StandardNormal)
}

/// Z(b) − Z(a): Y at a and b, then the exact 2×2 draw of (W(Y(a)), W(Y(b))).
pub fn sample_increment<R: Rng + ?Sized>(spec: &ProcessSpec, a: f64, b: f64, rng: &mut R) -> f64 {
    if a == b {
        return 0.0;
    }
    let ya = if a > 0.0 { spec.stable.sample(a, rng) } else { 0.0 };
    let yb = ya + spec.stable.sample(b - a, rng);
    let h = spec.hurst();
    let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    let v1 = ya.abs().powf(2.0 * h);
    let v2 = yb.abs().powf(2.0 * h);
    if v1 == 0.0 {
        return v2.sqrt() * z2;
    }
    let c = fbm_covariance(&spec.fbm, ya, yb);
    let w1 = v1.sqrt() * z1;
    let w2 = c / v1 * w1 + (v2 - c * c / v1).max(0.0).sqrt() * z2;
    w2 - w1
}

/// Two-sample KS comparison of Z(ct) against c^{exponent}·Z(t).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SelfSimilarity {
    pub statistic: f64,
    pub critical_1pct: f64,
    pub exponent: f64,
    pub passed: bool,
}

pub fn self_similarity_test(spec: &ProcessSpec, c: f64, t: f64, n_paths: usize, seed: u64) -> Result<SelfSimilarity> {
    self_similarity_ks(spec, c, t, spec.index(), n_paths, seed)
}

/// As `self_similarity_test` with an arbitrary scaling exponent (power checks).
pub fn self_similarity_ks(
    spec: &ProcessSpec,
    c: f64,
    t: f64,
    exponent: f64,
    n_paths: usize,
    seed: u64,
) -> Result<SelfSimilarity> {
    if !(c > 0.0 && t > 0.0) {
        return Err(invalid("c, t", "must be positive"));
    }
    let scaled: Vec<f64> =
        (0..n_paths as u64).into_par_iter().map(|i| sample_marginal(spec, c * t, &mut stream(seed, &[i, 0]))).collect();
    let factor = c.powf(exponent);
    let base: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| factor * sample_marginal(spec, t, &mut stream(seed, &[i, 1])))
        .collect();
    let statistic = ks_two_sample(&scaled, &base);
    let critical_1pct = ks_two_sample_critical(n_paths, n_paths, 0.01);
    Ok(SelfSimilarity { statistic, critical_1pct, exponent, passed: statistic < critical_1pct })
}

/// Two-sample KS distance of X_j(τ₁+h) − X_j(τ₁) against X_j(τ₂+h) − X_j(τ₂), per coordinate.
pub fn stationary_increments_ks(
    spec: &ProcessSpec,
    tau1: f64,
    tau2: f64,
    h: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let draw = |tau: f64, tag: u64| -> Result<Vec<Vec<f64>>> {
        let times = if tau > 0.0 { vec![0.0, tau, tau + h] } else { vec![0.0, h] };
        let paths: Vec<ProcessPath> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| sample_path(spec, &times, path_seed(seed, 2 * i + tag)))
            .collect::<Result<_>>()?;
        Ok((0..spec.dim)
            .map(|j| paths.iter().map(|p| p.values[j][times.len() - 1] - p.values[j][times.len() - 2]).collect())
            .collect())
    };
    let a = draw(tau1, 0)?;
    let b = draw(tau2, 1)?;
    Ok(a.iter().zip(&b).map(|(x, y)| ks_two_sample(x, y)).collect())
}

/// Extrapolated tail constant of |Z(b) − Z(a)|.
#[derive(Clone, Debug, Serialize)]
pub struct TailConstantEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// k·E|N|^{α/H}·(b − a), with k the stable tail constant.
    pub target: f64,
    /// (u, u^{α/H}·P̂(|ΔZ| > u), exceedance count) for every grid point.
    pub table: Vec<(f64, f64, usize)>,
    /// Fewer than 200 exceedances at the largest u.
    pub thin_tail: bool,
}

/// E|N|^p for a standard normal N.
pub fn normal_abs_moment(p: f64) -> f64 {
    2f64.powf(0.5 * p) * libm::tgamma(0.5 * (p + 1.0)) / std::f64::consts::PI.sqrt()
}

/// u^{α/H}·P(|Z(b) − Z(a)| > u) on `u_grid`, extrapolated linearly in 1/u
/// over the two largest decades of the grid.
pub fn increment_tail_constant(
    spec: &ProcessSpec,
    a: f64,
    b: f64,
    u_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<TailConstantEstimate> {
    if !(0.0 <= a && a <= b) {
        return Err(invalid("a, b", "need 0 <= a <= b"));
    }
    if spec.alpha() >= 2.0 {
        return Err(invalid("alpha", "a power tail needs alpha < 2"));
    }
    if u_grid.is_empty() || u_grid.iter().any(|&u| u <= 0.0) || u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("u_grid", "must be positive and increasing"));
    }
    let p = spec.alpha() / spec.hurst();
    let target = spec.stable.tail_constant_k()? * normal_abs_moment(p) * (b - a);
    let counts = exceedance_counts(u_grid, n_paths, |i| sample_increment(spec, a, b, &mut stream(seed, &[i])).abs());
    let n = n_paths as f64;
    let table: Vec<(f64, f64, usize)> =
        u_grid.iter().zip(&counts).map(|(&u, &k)| (u, u.powf(p) * k as f64 / n, k)).collect();
    let last = *counts.last().unwrap_or(&0);
    let thin_tail = last < 200;
    if a == b {
        return Ok(TailConstantEstimate { estimate: 0.0, std_error: 0.0, target: 0.0, table, thin_tail });
    }
    let u_max = u_grid[u_grid.len() - 1];
    let used: Vec<_> = table.iter().filter(|r| r.0 >= u_max / 100.0 && r.2 > 0).collect();
    let (estimate, mut std_error) = if used.len() >= 2 {
        let x: Vec<f64> = used.iter().map(|r| 1.0 / r.0).collect();
        let y: Vec<f64> = used.iter().map(|r| r.1).collect();
        let var: Vec<f64> = used
            .iter()
            .map(|r| {
                let ph = r.2 as f64 / n;
                r.0.powf(2.0 * p) * ph * (1.0 - ph) / n
            })
            .collect();
        let fit = weighted_fit(&x, &y, &var);
        (fit.intercept, fit.intercept_se)
    } else if let Some(r) = used.first() {
        (r.1, r.1 / (r.2 as f64).sqrt())
    } else {
        (0.0, f64::INFINITY)
    };
    if thin_tail {
        std_error *= (200.0 / last.max(1) as f64).sqrt();
    }
    Ok(TailConstantEstimate { estimate, std_error, target, table, thin_tail })
}

/// Number of draws exceeding each u, for draws indexed 0..n (parallel, order-free).
fn exceedance_counts(u_grid: &[f64], n: usize, draw: impl Fn(u64) -> f64 + Sync) -> Vec<usize> {
    const CHUNK: u64 = 1 << 14;
    let chunks = (n as u64).div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0usize; u_grid.len()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n as u64) {
                let v = draw(i);
                let k = u_grid.partition_point(|&u| u < v);
                for slot in &mut counts[..k] {
                    *slot += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0usize; u_grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Tail exponent of the running maximum.
#[derive(Clone, Debug, Serialize)]
pub struct SupTailSlope {
    /// Combined local slope over the fit window.
    pub slope: f64,
    /// Standard error inflated by the lack-of-fit factor √max(1, χ²/dof).
    pub std_error: f64,
    pub ci: (f64, f64),
    pub target: f64,
    /// Weighted log-log fit over the whole grid (diagnostic; biased at small u).
    pub full_grid: LinearFit,
    /// (u, P̂(sup |Z| > u), count).
    pub table: Vec<(f64, f64, usize)>,
    pub thin_tail: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SupTailOptions {
    /// Steps of the regular grid on [0, 1] over which the maximum is taken.
    pub n_steps: usize,
    /// The slope uses grid points u ≥ u_max / fit_window.
    pub fit_window: f64,
}

impl Default for SupTailOptions {
    fn default() -> Self {
        Self { n_steps: 32, fit_window: 2.0 }
    }
}

/// Slope of log P(sup_{t≤1} |Z(t)| > u) against log u; 95% interval.
///
/// The exceedance counts are nested, so successive ratios k_{i+1}/k_i are
/// conditionally binomial and independent. Each gives a local slope
/// ln(k_{i+1}/k_i)/ln(u_{i+1}/u_i); those inside the fit window are combined
/// by inverse variance. Smaller u only enter the diagnostic full-grid fit.
pub fn sup_tail_slope(
    spec: &ProcessSpec,
    u_grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: SupTailOptions,
) -> Result<SupTailSlope> {
    if spec.alpha() >= 2.0 {
        return Err(invalid("alpha", "a power tail needs alpha < 2"));
    }
    if u_grid.len() < 3 || u_grid.iter().any(|&u| u < 1.0) || u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("u_grid", "need at least three increasing values >= 1"));
    }
    if !(opts.fit_window > 1.0) || opts.n_steps == 0 {
        return Err(invalid("opts", "fit_window must exceed 1 and n_steps be positive"));
    }
    let times: Vec<f64> = (0..=opts.n_steps).map(|i| i as f64 / opts.n_steps as f64).collect();
    // Surface the first simulation error, if any, before the parallel sweep.
    sample_first_coordinate(spec, &times, path_seed(seed, 0))?;
    let counts = exceedance_counts(u_grid, n_paths, |i| {
        sample_first_coordinate(spec, &times, path_seed(seed, i))
            .map(|z| z.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::NAN)
    });
    let n = n_paths as f64;
    let table: Vec<(f64, f64, usize)> = u_grid.iter().zip(&counts).map(|(&u, &k)| (u, k as f64 / n, k)).collect();
    let used: Vec<_> = table.iter().filter(|r| r.2 > 0).collect();
    if used.len() < 3 {
        return Err(invalid("n_paths", "too few exceedances for a slope"));
    }
    let x: Vec<f64> = used.iter().map(|r| r.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|r| r.1.ln()).collect();
    let var: Vec<f64> = used.iter().map(|r| (1.0 - r.1) / (n * r.1)).collect();
    let full_grid = weighted_fit(&x, &y, &var);

    let u_min = u_grid[u_grid.len() - 1] / opts.fit_window;
    let local: Vec<(f64, f64)> = used
        .windows(2)
        .filter(|w| w[0].0 >= u_min * (1.0 - 1e-12))
        .map(|w| {
            let q = w[1].2 as f64 / w[0].2 as f64;
            let span = (w[1].0 / w[0].0).ln();
            (q.ln() / span, (1.0 - q) / (q * w[0].2 as f64) / (span * span))
        })
        .collect();
    if local.is_empty() {
        return Err(invalid("u_grid", "fit window holds fewer than two populated grid points"));
    }
    let wsum: f64 = local.iter().map(|l| 1.0 / l.1).sum();
    let slope = local.iter().map(|l| l.0 / l.1).sum::<f64>() / wsum;
    let chi2: f64 = local.iter().map(|l| (l.0 - slope).powi(2) / l.1).sum();
    let inflation = if local.len() > 1 { (chi2 / (local.len() - 1) as f64).max(1.0).sqrt() } else { 1.0 };
    let std_error = inflation / wsum.sqrt();
    let thin_tail = counts.last().is_some_and(|&k| k < 200);
    Ok(SupTailSlope {
        slope,
        std_error,
        ci: (slope - 1.96 * std_error, slope + 1.96 * std_error),
        target: -spec.alpha() / spec.hurst(),
        full_grid,
        table,
        thin_tail,
    })
}

/// P̂(|Z(t)| > u) at each t.
pub fn marginal_tail_profile(spec: &ProcessSpec, times: &[f64], u: f64, n_paths: usize, seed: u64) -> Vec<f64> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let hits: usize = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| (sample_marginal(spec, t, &mut stream(seed, &[k as u64, i])).abs() > u) as usize)
                .sum();
            hits as f64 / n_paths as f64
        })
        .collect()
}

/// Sampling layout of the oscillation statistic.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OscillationOptions {
    /// Number of disjoint balls B(τ_j, r), τ_j = (2j + 1)r.
    pub centers: usize,
    /// Grid points per radius inside each ball half.
    pub points_per_radius: usize,
    /// Smallest admissible grid step r / points_per_radius.
    pub resolution: f64,
}

impl Default for OscillationOptions {
    fn default() -> Self {
        Self { centers: 4, points_per_radius: 8, resolution: 1e-12 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationExponent {
    pub exponent: f64,
    pub std_error: f64,
    pub target: f64,
    /// (r, mean log statistic, standard error of the mean).
    pub per_radius: Vec<(f64, f64, f64)>,
    /// Smallest statistic seen over all radii and replicates.
    pub min_statistic: f64,
}

/// Regression exponent of min_j sup_{s ∈ B(τ_j, r)} |X(s) − X(τ_j)| against r.
///
/// Each (replicate, radius) pair simulates X on the grid {k·r/K : 0 ≤ k ≤ 2CK}
/// from its own seed, so the statistic at radius r is a scaled copy of the one
/// at radius 1 in law; the mean log statistic is regressed on log r.
pub fn oscillation_exponent(
    spec: &ProcessSpec,
    radii: &[f64],
    n_paths: usize,
    seed: u64,
    opts: OscillationOptions,
) -> Result<OscillationExponent> {
    if spec.hurst() >= spec.alpha() {
        return Err(invalid("H", "the oscillation bound needs H < alpha"));
    }
    if radii.len() < 2 || opts.centers == 0 || opts.points_per_radius == 0 {
        return Err(invalid("radii", "need at least two radii and a nonempty layout"));
    }
    if let Some(&r) = radii.iter().find(|&&r| !(r / opts.points_per_radius as f64 >= opts.resolution)) {
        return Err(invalid("radii", format!("radius {r} is below the grid resolution")));
    }
    let k = opts.points_per_radius;
    let mut per_radius = Vec::new();
    let mut min_statistic = f64::INFINITY;
    for (ri, &r) in radii.iter().enumerate() {
        let step = r / k as f64;
        let times: Vec<f64> = (0..=2 * opts.centers * k).map(|i| i as f64 * step).collect();
        let stats: Vec<f64> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let path = sample_path(spec, &times, path_seed(seed, (ri as u64) << 40 | i))?;
                Ok((0..opts.centers)
                    .map(|j| {
                        let c = (2 * j + 1) * k;
                        let centre = path.point(c);
                        (2 * j * k..=(2 * j + 2) * k)
                            .map(|s| {
                                path.values
                                    .iter()
                                    .zip(&centre)
                                    .map(|(row, x0)| (row[s] - x0).powi(2))
                                    .sum::<f64>()
                                    .sqrt()
                            })
                            .fold(0.0f64, f64::max)
                    })
                    .fold(f64::INFINITY, f64::min))
            })
            .collect::<Result<_>>()?;
        min_statistic = stats.iter().copied().fold(min_statistic, f64::min);
        let logs: Vec<f64> = stats.iter().map(|s| s.ln()).collect();
        let m = crate::stats::mean(&logs);
        let se = (crate::stats::variance(&logs) / logs.len() as f64).sqrt();
        per_radius.push((r, m, se));
    }
    let x: Vec<f64> = per_radius.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = per_radius.iter().map(|p| p.1).collect();
    let var: Vec<f64> = per_radius.iter().map(|p| p.2 * p.2).collect();
    let fit = weighted_fit(&x, &y, &var);
    Ok(OscillationExponent {
        exponent: fit.slope,
        std_error: fit.slope_se,
        target: spec.index(),
        per_radius,
        min_statistic,
    })
}
