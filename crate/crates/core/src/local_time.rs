//! Occupation measures and local times of X over time intervals.
//!
//! The main estimator is a Gaussian kernel smoothing of the occupation
//! measure of the sampled path; Fourier inversion is kept as a cross-check.
//! Every path is treated as piecewise constant with left-point values.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::process::{sample_path, ProcessPath, ProcessSpec};
use crate::quad::{integrate, FixedRule, QuadOpts};
use crate::rng::{path_seed, stream, Role};
use crate::stable::StableKind;
use crate::stats::{mean, normal_cdf, variance, weighted_fit, LinearFit};

const MAX_BINS: usize = 1 << 24;

/// B = [start, start + len].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeInterval {
    pub start: f64,
    pub len: f64,
}

impl TimeInterval {
    pub fn new(start: f64, len: f64) -> Result<Self> {
        if !(start >= 0.0 && len > 0.0 && (start + len).is_finite()) {
            return Err(invalid("interval", "needs start >= 0 and positive finite length"));
        }
        Ok(Self { start, len })
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }
}

/// Left-point quadrature weights of B on the path's time grid: (sample index, time).
fn time_weights(times: &[f64], b: &TimeInterval) -> Result<Vec<(usize, f64)>> {
    let last = *times.last().ok_or_else(|| invalid("path", "is empty"))?;
    if b.start < times[0] || b.end() > last * (1.0 + 1e-12) {
        return Err(invalid("interval", format!("[{}, {}] is outside the path's time range", b.start, b.end())));
    }
    let end = b.end().min(last);
    let mut out = Vec::new();
    for (i, w) in times.windows(2).enumerate() {
        let piece = w[1].min(end) - w[0].max(b.start);
        if piece > 0.0 {
            out.push((i, piece));
        }
    }
    if out.is_empty() {
        return Err(invalid("interval", "covers no time step of the path"));
    }
    Ok(out)
}

/// Regular grid of cubic bins; bin k along an axis is [lower + k·width, lower + (k+1)·width).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinGrid {
    pub lower: Vec<f64>,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl BinGrid {
    pub fn new(lower: Vec<f64>, width: f64, counts: Vec<usize>) -> Result<Self> {
        if !(width > 0.0) || lower.len() != counts.len() || counts.contains(&0) {
            return Err(invalid("bins", "need positive width and matching nonempty axes"));
        }
        let n = counts.iter().try_fold(1usize, |a, &c| a.checked_mul(c)).unwrap_or(usize::MAX);
        if n > MAX_BINS {
            return Err(Error::TooManyBins { count: n, cap: MAX_BINS });
        }
        Ok(Self { lower, width, counts })
    }

    /// Grid aligned to multiples of `width` covering the given points.
    pub fn covering(points: impl Iterator<Item = Vec<f64>>, width: f64) -> Result<Self> {
        let mut lo: Vec<f64> = Vec::new();
        let mut hi: Vec<f64> = Vec::new();
        for p in points {
            if lo.is_empty() {
                lo = p.clone();
                hi = p;
            } else {
                for k in 0..p.len() {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        if lo.is_empty() {
            return Err(invalid("bins", "no points to cover"));
        }
        let lower: Vec<f64> = lo.iter().map(|v| (v / width).floor() * width).collect();
        let counts: Vec<usize> = hi.iter().zip(&lower).map(|(h, l)| ((h - l) / width).floor() as usize + 1).collect();
        Self::new(lower, width, counts)
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.width.powi(self.counts.len() as i32)
    }

    /// Row-major flat index of the bin containing x.
    pub fn index(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0usize;
        for ((&xk, &lo), &n) in x.iter().zip(&self.lower).zip(&self.counts) {
            let c = ((xk - lo) / self.width).floor();
            if !(c >= 0.0 && (c as usize) < n) {
                return None;
            }
            flat = flat * n + c as usize;
        }
        Some(flat)
    }

    pub fn centre(&self, mut flat: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.counts.len()];
        for k in (0..self.counts.len()).rev() {
            let i = flat % self.counts[k];
            flat /= self.counts[k];
            c[k] = self.lower[k] + (i as f64 + 0.5) * self.width;
        }
        c
    }
}

pub enum Bins {
    /// Aligned grid of this width covering the path on B.
    Width(f64),
    Grid(BinGrid),
}

/// Time-weighted histogram of X over B.
#[derive(Clone, Debug, Serialize)]
pub struct OccupationEstimate {
    pub interval: TimeInterval,
    pub grid: BinGrid,
    pub mass: Vec<f64>,
    /// Time spent outside the grid.
    pub outside: f64,
}

impl OccupationEstimate {
    /// Mass inside the grid plus mass outside; equals |B| up to rounding.
    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.outside
    }

    /// Largest histogram density, the histogram view of L*(B).
    pub fn max_density(&self) -> f64 {
        self.mass.iter().copied().fold(0.0, f64::max) / self.grid.cell_volume()
    }

    /// ∫ L(x, B)² dx for the histogram density.
    pub fn l2_norm_squared(&self) -> f64 {
        self.mass.iter().map(|m| m * m).sum::<f64>() / self.grid.cell_volume()
    }
}

pub fn occupation_measure(path: &ProcessPath, interval: TimeInterval, bins: Bins) -> Result<OccupationEstimate> {
    let weights = time_weights(&path.times, &interval)?;
    let grid = match bins {
        Bins::Width(w) => BinGrid::covering(weights.iter().map(|&(i, _)| path.point(i)), w)?,
        Bins::Grid(g) => {
            if g.lower.len() != path.dim() {
                return Err(invalid("bins", "grid dimension differs from the path's"));
            }
            g
        }
    };
    let mut mass = vec![0.0; grid.len()];
    let mut outside = 0.0;
    for &(i, w) in &weights {
        match grid.index(&path.point(i)) {
            Some(k) => mass[k] += w,
            None => outside += w,
        }
    }
    Ok(OccupationEstimate { interval, grid, mass, outside })
}

/// Kernel estimate of L(x, B).
#[derive(Clone, Debug, Serialize)]
pub struct LocalTimeEstimate {
    pub x: Vec<f64>,
    pub interval: TimeInterval,
    pub value: f64,
    pub bandwidth: f64,
    /// Largest time step inside B.
    pub time_step: f64,
    /// dH/α ≥ 1: no L² local time exists and the value grows as the bandwidth shrinks.
    pub no_l2_local_time: bool,
}

/// Default kernel width 0.5·dt^{H/α}, the process modulus at the time step.
pub fn default_bandwidth(spec: &ProcessSpec, time_step: f64) -> f64 {
    0.5 * time_step.powf(spec.index())
}

fn gaussian_product(x: &[f64], y: impl Iterator<Item = f64>, bandwidth: f64) -> f64 {
    let norm = (2.0 * std::f64::consts::PI).sqrt() * bandwidth;
    let q: f64 = x.iter().zip(y).map(|(a, b)| ((a - b) / bandwidth).powi(2)).sum();
    (-0.5 * q).exp() / norm.powi(x.len() as i32)
}

pub fn local_time_estimate(
    path: &ProcessPath,
    x: &[f64],
    interval: TimeInterval,
    bandwidth: f64,
) -> Result<LocalTimeEstimate> {
    if !(bandwidth > 0.0) {
        return Err(invalid("bandwidth", "must be positive"));
    }
    if x.len() != path.dim() {
        return Err(invalid("x", "dimension differs from the path's"));
    }
    let weights = time_weights(&path.times, &interval)?;
    let value =
        weights.iter().map(|&(i, w)| w * gaussian_product(x, path.values.iter().map(|row| row[i]), bandwidth)).sum();
    Ok(LocalTimeEstimate {
        x: x.to_vec(),
        interval,
        value,
        bandwidth,
        time_step: weights.iter().map(|w| w.1).fold(0.0, f64::max),
        no_l2_local_time: path.exponent >= 1.0,
    })
}

/// Kernel estimate on a regular grid covering the path with a 6-bandwidth margin.
#[derive(Clone, Debug, Serialize)]
pub struct LocalTimeProfile {
    pub grid: BinGrid,
    /// Estimate at each bin centre, row-major.
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl LocalTimeProfile {
    /// Midpoint-rule integral over x.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

pub fn local_time_profile(
    path: &ProcessPath,
    interval: TimeInterval,
    bandwidth: f64,
    spacing: f64,
) -> Result<LocalTimeProfile> {
    if !(bandwidth > 0.0 && spacing > 0.0) {
        return Err(invalid("bandwidth, spacing", "must be positive"));
    }
    let weights = time_weights(&path.times, &interval)?;
    let pad = 6.0 * bandwidth;
    let pts = weights.iter().flat_map(|&(i, _)| {
        let p = path.point(i);
        [p.iter().map(|v| v - pad).collect::<Vec<_>>(), p.iter().map(|v| v + pad).collect()]
    });
    let grid = BinGrid::covering(pts, spacing)?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let c = grid.centre(k);
            weights
                .iter()
                .map(|&(i, w)| w * gaussian_product(&c, path.values.iter().map(|row| row[i]), bandwidth))
                .sum()
        })
        .collect();
    Ok(LocalTimeProfile { grid, values, bandwidth })
}

/// One-dimensional Fourier inversion (1/2π)∫ e^{−iux} μ̂_B(u) e^{−b²u²/2} du of
/// the empirical occupation transform, by panel-wise Gauss–Legendre quadrature.
/// With Gaussian damping of width b it reproduces the kernel estimate.
pub fn fourier_local_time(path: &ProcessPath, x: f64, interval: TimeInterval, bandwidth: f64) -> Result<f64> {
    if path.dim() != 1 {
        return Err(invalid("path", "Fourier inversion is implemented for d = 1"));
    }
    let weights = time_weights(&path.times, &interval)?;
    let offsets: Vec<(f64, f64)> = weights.iter().map(|&(i, w)| (path.values[0][i] - x, w)).collect();
    let span = offsets.iter().map(|o| o.0.abs()).fold(0.0, f64::max);
    let cutoff = 9.0 / bandwidth;
    let panels = ((cutoff * span / std::f64::consts::PI).ceil() as usize).max(8) + 8;
    let rule = FixedRule::composite(0.0, cutoff, panels, 16);
    let re = rule.apply(|u| {
        let damp = (-0.5 * (bandwidth * u).powi(2)).exp();
        damp * offsets.iter().map(|&(d, w)| w * (u * d).cos()).sum::<f64>()
    });
    Ok(re / std::f64::consts::PI)
}

/// Refinement ladder for the existence diagnostic. Level ℓ uses time step
/// horizon/(coarse_steps·refinement^ℓ) and bin width width_factor·dt^{H/α};
/// all levels subsample one path simulated at the finest step.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExistenceLadder {
    pub horizon: f64,
    pub coarse_steps: usize,
    pub refinement: usize,
    pub levels: usize,
    pub width_factor: f64,
    /// Growth factor per level separating the verdicts (an operating point).
    pub threshold: f64,
}

impl Default for ExistenceLadder {
    fn default() -> Self {
        Self { horizon: 1.0, coarse_steps: 8, refinement: 8, levels: 3, width_factor: 1.0, threshold: 1.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExistenceVerdict {
    Stabilizes,
    Diverges,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistenceLevel {
    pub time_step: f64,
    pub bin_width: f64,
    /// Monte Carlo mean of ∫ L(x, [0, T])² dx and its standard error.
    pub l2: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistenceDiagnostic {
    pub exponent: f64,
    pub levels: Vec<ExistenceLevel>,
    pub verdict: ExistenceVerdict,
    pub ladder: ExistenceLadder,
}

/// ∫ L² dx of the histogram of `points` with cubic bins of `width`; each point carries `w` time.
fn sparse_l2(points: &[Vec<f64>], w: f64, width: f64) -> f64 {
    let mut keys: Vec<Vec<i64>> =
        points.iter().map(|p| p.iter().map(|v| (v / width).floor() as i64).collect()).collect();
    keys.sort_unstable();
    let mut total = 0.0;
    let mut run = 0usize;
    for k in 0..keys.len() {
        run += 1;
        if k + 1 == keys.len() || keys[k + 1] != keys[k] {
            total += (run as f64 * w).powi(2);
            run = 0;
        }
    }
    total / width.powi(points[0].len() as i32)
}

pub fn existence_diagnostic(
    spec: &ProcessSpec,
    ladder: ExistenceLadder,
    n_paths: usize,
    seed: u64,
) -> Result<ExistenceDiagnostic> {
    if ladder.levels < 2 || ladder.refinement < 2 || ladder.coarse_steps == 0 || n_paths < 2 {
        return Err(invalid("ladder", "needs two levels, refinement >= 2, and two paths"));
    }
    if !(ladder.horizon > 0.0 && ladder.width_factor > 0.0 && ladder.threshold > 1.0) {
        return Err(invalid("ladder", "horizon, width factor and threshold out of range"));
    }
    let finest = ladder.coarse_steps * ladder.refinement.pow(ladder.levels as u32 - 1);
    let times: Vec<f64> = (0..=finest).map(|k| ladder.horizon * k as f64 / finest as f64).collect();
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(spec, &times, path_seed(seed, i))?;
            Ok((0..ladder.levels)
                .map(|l| {
                    let stride = ladder.refinement.pow((ladder.levels - 1 - l) as u32);
                    let steps = finest / stride;
                    let dt = ladder.horizon / steps as f64;
                    // Left-point rule: samples 0..steps−1 each carry dt.
                    let pts: Vec<Vec<f64>> = (0..steps).map(|k| path.point(k * stride)).collect();
                    sparse_l2(&pts, dt, ladder.width_factor * dt.powf(spec.index()))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let levels: Vec<ExistenceLevel> = (0..ladder.levels)
        .map(|l| {
            let xs: Vec<f64> = per_path.iter().map(|v| v[l]).collect();
            let dt = ladder.horizon / (ladder.coarse_steps * ladder.refinement.pow(l as u32)) as f64;
            ExistenceLevel {
                time_step: dt,
                bin_width: ladder.width_factor * dt.powf(spec.index()),
                l2: mean(&xs),
                std_error: (variance(&xs) / xs.len() as f64).sqrt(),
            }
        })
        .collect();
    let first = levels[0].l2;
    let last = levels[levels.len() - 1].l2;
    let verdict = if last / first < ladder.threshold {
        ExistenceVerdict::Stabilizes
    } else if levels.windows(2).all(|w| w[1].l2 >= ladder.threshold * w[0].l2) {
        ExistenceVerdict::Diverges
    } else {
        ExistenceVerdict::Inconclusive
    };
    Ok(ExistenceDiagnostic { exponent: spec.exponent(), levels, verdict, ladder })
}

/// Both sides of E∫|μ̂_{[0,T]}(u)|² du = (2π)^{d/2} K^d ∫∫|t − s|^{−dH/α} ds dt,
/// with K = ∫ |z|^{−H} p₁(z) dz.
#[derive(Clone, Debug, Serialize)]
pub struct FourierL2Check {
    /// Monte Carlo estimate of E∫_{[−U,U]^d} |μ̂(u)|² du.
    pub truncated_lhs: f64,
    pub truncated_lhs_se: f64,
    /// Analytic E∫ over the complement of the cube.
    pub tail_correction: f64,
    pub lhs: f64,
    /// ∫ |z|^{−H} p₁(z) dz.
    pub kernel: f64,
    pub time_factor: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// Points per jitter set and cutoff U for `fourier_l2_check`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FourierOptions {
    pub points: usize,
    pub cutoff: f64,
}

impl Default for FourierOptions {
    fn default() -> Self {
        Self { points: 256, cutoff: 200.0 }
    }
}

/// E|Y₁|^{−H} by quadrature against the stable density.
pub fn negative_moment(spec: &ProcessSpec) -> Result<f64> {
    let h = spec.hurst();
    let law = spec.stable;
    let opts = QuadOpts::tol(1e-13, 1e-10);
    let p = |y: f64| law.density(1.0, y).unwrap_or(f64::NAN);
    // y = s^{1/(1−H)} removes the y^{−H} singularity on (0, 1).
    let near = integrate(|s| if s > 0.0 { p(s.powf(1.0 / (1.0 - h))) } else { 0.0 }, 0.0, 1.0, opts)?.value / (1.0 - h);
    let far = crate::quad::integrate_upper(|y| y.powf(-h) * p(y), 1.0, opts)?.value;
    let sides = if law.kind() == StableKind::Symmetric { 2.0 } else { 1.0 };
    Ok(sides * (near + far))
}

/// ∫₀^T∫₀^T |t − s|^{−γ} ds dt by quadrature.
pub fn time_factor(horizon: f64, gamma: f64) -> Result<f64> {
    if gamma >= 1.0 {
        return Err(Error::CriterionViolated { exponent: gamma });
    }
    // 2∫₀^T (T − τ) τ^{−γ} dτ with τ = T s^{1/(1−γ)}.
    let q = integrate(|s| 1.0 - s.powf(1.0 / (1.0 - gamma)), 0.0, 1.0, QuadOpts::tol(0.0, 1e-12))?;
    Ok(2.0 * horizon.powf(2.0 - gamma) / (1.0 - gamma) * q.value)
}

pub fn fourier_l2_check(
    spec: &ProcessSpec,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    opts: FourierOptions,
) -> Result<FourierL2Check> {
    let gamma = spec.exponent();
    if gamma >= 1.0 {
        return Err(Error::CriterionViolated { exponent: gamma });
    }
    if !(horizon > 0.0 && opts.cutoff > 0.0) || opts.points == 0 || n_paths < 2 {
        return Err(invalid("fourier options", "need positive horizon, cutoff, points and two paths"));
    }
    let d = spec.dim as i32;
    let root2pi = (2.0 * std::f64::consts::PI).sqrt();
    let kernel = negative_moment(spec)?;
    let tf = time_factor(horizon, gamma)?;
    let rhs = (root2pi * kernel).powi(d) * tf;

    // Two independent stratified-jitter time sets give an unbiased product
    // μ̂₁(u)·conj μ̂₂(u); its integral over the cube is a sum of sinc terms.
    let m = opts.points;
    let dt = horizon / m as f64;
    let u = opts.cutoff;
    let draws: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i, Role::Aux as u64]);
            let first: Vec<f64> = (0..m).map(|k| (k as f64 + rng.random::<f64>()) * dt).collect();
            let second: Vec<f64> = (0..m).map(|k| (k as f64 + rng.random::<f64>()) * dt).collect();
            let mut times: Vec<(f64, usize)> = first.iter().chain(&second).copied().zip(0..).collect();
            times.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut grid = vec![0.0];
            grid.extend(times.iter().map(|t| t.0));
            let path = sample_path(spec, &grid, path_seed(seed, i))?;
            let mut slot = vec![0usize; 2 * m];
            for (pos, &(_, k)) in times.iter().enumerate() {
                slot[k] = pos + 1;
            }
            let pa: Vec<Vec<f64>> = (0..m).map(|k| path.point(slot[k])).collect();
            let pb: Vec<Vec<f64>> = (m..2 * m).map(|k| path.point(slot[k])).collect();
            let mut total = 0.0;
            for a in &pa {
                for b in &pb {
                    total += a.iter().zip(b).map(|(x, y)| sinc_integral(x - y, u)).product::<f64>();
                }
            }
            Ok(total * dt * dt)
        })
        .collect::<Result<_>>()?;
    let truncated_lhs = mean(&draws);
    let truncated_lhs_se = (variance(&draws) / draws.len() as f64).sqrt();

    let tail_correction = cube_tail(spec, horizon, u, kernel)?;
    let lhs = truncated_lhs + tail_correction;
    if tail_correction > 0.1 * lhs {
        return Err(Error::CutoffTooSmall { fraction: 100.0 * tail_correction / lhs });
    }
    Ok(FourierL2Check {
        truncated_lhs,
        truncated_lhs_se,
        tail_correction,
        lhs,
        kernel,
        time_factor: tf,
        rhs,
        relative_gap: (lhs - rhs).abs() / rhs,
    })
}

/// ∫_{−U}^{U} e^{iuΔ} du.
fn sinc_integral(delta: f64, u: f64) -> f64 {
    if (u * delta).abs() < 1e-8 {
        2.0 * u
    } else {
        2.0 * (u * delta).sin() / delta
    }
}

/// E∫ over R^d minus [−U, U]^d of |μ̂(u)|², as 2∫₀^T (T − τ)(A_∞^d − A_U^d) dτ
/// with A_U(τ) = E∫_{−U}^{U} e^{−u²a²/2} du and a = |Y_τ|^H.
fn cube_tail(spec: &ProcessSpec, horizon: f64, cutoff: f64, kernel: f64) -> Result<f64> {
    let h = spec.hurst();
    let idx = spec.index();
    let d = spec.dim as i32;
    let root2pi = (2.0 * std::f64::consts::PI).sqrt();
    // Fixed rule for E over |Y₁| in log scale.
    let rule = FixedRule::composite(-30.0, 20.0, 200, 8);
    let sides = if spec.stable.kind() == StableKind::Symmetric { 2.0 } else { 1.0 };
    let nodes: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .map(|&v| {
            let y = v.exp();
            (y.powf(h), sides * y * spec.stable.density(1.0, y).unwrap_or(0.0))
        })
        .collect();
    let rw = &rule.weights;
    // Deficit A_∞ − A_U at time τ.
    let deficit = |tau: f64| -> f64 {
        let scale = tau.powf(idx);
        nodes
            .iter()
            .zip(rw)
            .map(|(&(yh, py), w)| {
                let a = scale * yh;
                w * py * 2.0 * root2pi * (1.0 - normal_cdf(cutoff * a)) / a
            })
            .sum()
    };
    let gamma = spec.exponent();
    let g = move |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let tau = horizon * s.powf(1.0 / (1.0 - gamma));
        let full = root2pi * kernel * tau.powf(-idx);
        let part = (full - deficit(tau)).max(0.0);
        // (A_∞^d − A_U^d)·τ^γ stays bounded as τ → 0.
        (horizon - tau) * (full.powi(d) - part.powi(d)) * tau.powf(gamma)
    };
    let q = integrate(g, 0.0, 1.0, QuadOpts::tol(1e-12, 1e-8))?;
    Ok(2.0 * horizon.powf(1.0 - gamma) / (1.0 - gamma) * q.value)
}

/// Regression of a scale statistic on log h.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub target: f64,
    pub fit: LinearFit,
    /// (h, statistic, standard error).
    pub table: Vec<(f64, f64, f64)>,
    /// Paths on which |B| ≤ L*·Π(range + 2·width) failed (always 0 for a correct histogram).
    pub pigeonhole_violations: usize,
}

/// Sampling layout for the h-scaling checks: `points` steps per interval and
/// bandwidth (or bin width) width_factor·(h/points)^{H/α}, which keeps the
/// estimator exactly self-similar across h.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalingOptions {
    pub points: usize,
    pub width_factor: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self { points: 256, width_factor: 1.0 }
    }
}

fn check_scaling_inputs(spec: &ProcessSpec, h_grid: &[f64], n_paths: usize) -> Result<()> {
    if spec.exponent() >= 1.0 {
        return Err(Error::CriterionViolated { exponent: spec.exponent() });
    }
    if h_grid.len() < 2 || h_grid.iter().any(|&h| !(h > 0.0)) || n_paths < 2 {
        return Err(invalid("h_grid", "need two positive values and two paths"));
    }
    Ok(())
}

fn fit_table(table: Vec<(f64, f64, f64)>, log_stat: bool, target: f64, violations: usize) -> ScalingFit {
    let x: Vec<f64> = table.iter().map(|r| r.0.ln()).collect();
    let (y, var): (Vec<f64>, Vec<f64>) = if log_stat {
        table.iter().map(|r| (r.1, r.2 * r.2)).unzip()
    } else {
        table.iter().map(|r| (r.1.ln(), (r.2 / r.1).powi(2))).unzip()
    };
    let fit = weighted_fit(&x, &y, &var);
    ScalingFit {
        slope: fit.slope,
        std_error: fit.slope_se,
        ci: fit.slope_interval(1.96),
        target,
        fit,
        table,
        pigeonhole_violations: violations,
    }
}

/// Slope of log E[L(0, [0, h])^n] against log h; the target is n(1 − dH/α).
pub fn moment_scaling_check(
    spec: &ProcessSpec,
    moment: u32,
    h_grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: ScalingOptions,
) -> Result<ScalingFit> {
    check_scaling_inputs(spec, h_grid, n_paths)?;
    if moment == 0 {
        return Err(invalid("moment", "must be positive"));
    }
    let origin = vec![0.0; spec.dim];
    let mut table = Vec::new();
    for (hi, &h) in h_grid.iter().enumerate() {
        let times: Vec<f64> = (0..=opts.points).map(|k| h * k as f64 / opts.points as f64).collect();
        let bw = opts.width_factor * (h / opts.points as f64).powf(spec.index());
        let vals: Vec<f64> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let path = sample_path(spec, &times, path_seed(seed, (hi as u64) << 40 | i))?;
                let l = local_time_estimate(&path, &origin, TimeInterval { start: 0.0, len: h }, bw)?;
                Ok(l.value.powi(moment as i32))
            })
            .collect::<Result<_>>()?;
        table.push((h, mean(&vals), (variance(&vals) / vals.len() as f64).sqrt()));
    }
    Ok(fit_table(table, false, moment as f64 * (1.0 - spec.exponent()), 0))
}

/// Slope of E log sup_x L(x, [0, h]) against log h (histogram L*); the target is 1 − dH/α.
/// By stationary increments the interval may start at 0.
pub fn holder_set_variable(
    spec: &ProcessSpec,
    h_grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: ScalingOptions,
) -> Result<ScalingFit> {
    check_scaling_inputs(spec, h_grid, n_paths)?;
    let mut table = Vec::new();
    let mut violations = 0;
    for (hi, &h) in h_grid.iter().enumerate() {
        let times: Vec<f64> = (0..=opts.points).map(|k| h * k as f64 / opts.points as f64).collect();
        let width = opts.width_factor * (h / opts.points as f64).powf(spec.index());
        let rows: Vec<(f64, bool)> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let path = sample_path(spec, &times, path_seed(seed, (hi as u64) << 40 | i))?;
                let occ = occupation_measure(&path, TimeInterval { start: 0.0, len: h }, Bins::Width(width))?;
                let l_star = occ.max_density();
                let bound = l_star * pigeonhole_volume(&path, width);
                Ok((l_star.ln(), h <= bound * (1.0 + 1e-12)))
            })
            .collect::<Result<_>>()?;
        violations += rows.iter().filter(|r| !r.1).count();
        let logs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        table.push((h, mean(&logs), (variance(&logs) / logs.len() as f64).sqrt()));
    }
    Ok(fit_table(table, true, 1.0 - spec.exponent(), violations))
}

/// Π_k (range of X_k over the left-point samples + 2·width): the volume the
/// aligned histogram can occupy.
pub fn pigeonhole_volume(path: &ProcessPath, width: f64) -> f64 {
    let n = path.times.len() - 1;
    path.values
        .iter()
        .map(|row| {
            let (lo, hi) = row[..n].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            hi - lo + 2.0 * width
        })
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::FbmSpec;
    use crate::stable::StableSpec;

    fn spec(h: f64, a: f64, kind: StableKind, d: usize) -> ProcessSpec {
        ProcessSpec::from_parts(h, a, kind, d).unwrap()
    }

    fn grid(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    fn zero_path(n: usize, d: usize) -> ProcessPath {
        let mut p = sample_path(&spec(0.5, 2.0, StableKind::Symmetric, d), &grid(n, 1.0), 0).unwrap();
        p.values.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v = 0.0));
        p
    }

    #[test]
    fn mass_equals_interval_length() {
        let s = spec(0.5, 1.5, StableKind::Symmetric, 2);
        let p = sample_path(&s, &grid(200, 1.0), 3).unwrap();
        for b in [TimeInterval::new(0.0, 1.0).unwrap(), TimeInterval::new(0.123, 0.5).unwrap()] {
            let occ = occupation_measure(&p, b, Bins::Width(0.05)).unwrap();
            assert!((occ.total() - b.len).abs() < 1e-12);
            assert_eq!(occ.outside, 0.0);
            assert!(occ.mass.iter().all(|&m| m >= 0.0));
        }
        assert!(occupation_measure(&p, TimeInterval { start: 0.5, len: 0.0 }, Bins::Width(0.1)).is_err());
        assert!(occupation_measure(&p, TimeInterval::new(0.5, 1.0).unwrap(), Bins::Width(0.1)).is_err());
    }

    #[test]
    fn constant_zero_path_puts_all_mass_at_origin() {
        let p = zero_path(50, 1);
        let g = BinGrid::new(vec![-1.0], 0.25, vec![8]).unwrap();
        let occ = occupation_measure(&p, TimeInterval::new(0.0, 1.0).unwrap(), Bins::Grid(g)).unwrap();
        let k = occ.grid.index(&[0.0]).unwrap();
        assert!((occ.mass[k] - 1.0).abs() < 1e-12);
        assert_eq!(occ.mass.iter().filter(|&&m| m > 0.0).count(), 1);
    }

    #[test]
    fn occupation_is_stable_under_time_refinement() {
        let s = spec(0.5, 2.0, StableKind::Symmetric, 1);
        let fine = sample_path(&s, &grid(4096, 1.0), 5).unwrap();
        let coarse = ProcessPath {
            times: fine.times.iter().step_by(2).copied().collect(),
            values: vec![fine.values[0].iter().step_by(2).copied().collect()],
            ..fine.clone()
        };
        let b = TimeInterval::new(0.0, 1.0).unwrap();
        let g = BinGrid::covering(fine.values[0].iter().map(|&v| vec![v]), 0.25).unwrap();
        let a = occupation_measure(&fine, b, Bins::Grid(g.clone())).unwrap();
        let c = occupation_measure(&coarse, b, Bins::Grid(g)).unwrap();
        assert!((a.total() - c.total()).abs() < 1e-12);
        let l1: f64 = a.mass.iter().zip(&c.mass).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 < 0.05, "{l1}");
    }

    #[test]
    fn kernel_profile_integrates_to_interval_length() {
        for d in [1, 2] {
            let s = spec(0.5, 2.0, StableKind::Symmetric, d);
            let p = sample_path(&s, &grid(256, 1.0), 7).unwrap();
            let b = TimeInterval::new(0.25, 0.5).unwrap();
            let bw = default_bandwidth(&s, 1.0 / 256.0);
            let prof = local_time_profile(&p, b, bw, bw / 2.0).unwrap();
            assert!((prof.integral() / 0.5 - 1.0).abs() < 0.02, "{}", prof.integral());
            assert!(prof.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn fourier_inversion_matches_kernel() {
        let s = spec(0.5, 2.0, StableKind::Symmetric, 1);
        let p = sample_path(&s, &grid(512, 1.0), 9).unwrap();
        let b = TimeInterval::new(0.0, 1.0).unwrap();
        for x in [-0.3, 0.0, 0.2] {
            let k = local_time_estimate(&p, &[x], b, 0.05).unwrap().value;
            let f = fourier_local_time(&p, x, b, 0.05).unwrap();
            assert!((f / k - 1.0).abs() < 1e-6, "{f} {k}");
        }
    }

    #[test]
    fn symmetric_in_distribution() {
        let s = spec(0.5, 1.5, StableKind::Symmetric, 1);
        let b = TimeInterval::new(0.0, 1.0).unwrap();
        let (mut plus, mut minus) = (0.0, 0.0);
        for i in 0..10_000u64 {
            let p = sample_path(&s, &grid(64, 1.0), i).unwrap();
            plus += local_time_estimate(&p, &[0.3], b, 0.1).unwrap().value;
            minus += local_time_estimate(&p, &[-0.3], b, 0.1).unwrap().value;
        }
        assert!((plus / minus - 1.0).abs() < 0.05, "{plus} {minus}");
    }

    #[test]
    fn no_l2_flag_follows_exponent() {
        let s = spec(0.8, 0.6, StableKind::Subordinator, 1);
        let p = sample_path(&s, &grid(16, 1.0), 1).unwrap();
        let e = local_time_estimate(&p, &[0.0], TimeInterval::new(0.0, 1.0).unwrap(), 0.1).unwrap();
        assert!(e.no_l2_local_time);
    }

    #[test]
    fn time_factor_closed_form() {
        let tf = time_factor(1.0, 0.25).unwrap();
        assert!((tf - 32.0 / 21.0).abs() < 1e-10);
        let t = 2.5;
        let g = 0.6;
        let closed = 2.0 * f64::powf(t, 2.0 - g) / ((1.0 - g) * (2.0 - g));
        assert!((time_factor(t, g).unwrap() / closed - 1.0).abs() < 1e-10);
        assert!(matches!(time_factor(1.0, 1.0), Err(Error::CriterionViolated { .. })));
    }

    #[test]
    fn negative_moment_gaussian() {
        // Y₁ ~ N(0, 2): E|Y₁|^{−1/2} = 2^{−1/4}·Γ(1/4)/(√π·2^{1/4}).
        let s = spec(0.5, 2.0, StableKind::Symmetric, 1);
        let exact = 2f64.powf(-0.25) * 2f64.powf(-0.25) * libm::tgamma(0.25) / std::f64::consts::PI.sqrt();
        assert!((negative_moment(&s).unwrap() / exact - 1.0).abs() < 1e-8);
        // Cauchy: E|Y|^{−1/2} = √2.
        let c = spec(0.5, 1.0, StableKind::Symmetric, 1);
        assert!((negative_moment(&c).unwrap() - 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn fourier_identity_refuses_without_local_time() {
        let s = spec(0.8, 0.6, StableKind::Subordinator, 1);
        assert!(matches!(
            fourier_l2_check(&s, 1.0, 10, 1, FourierOptions::default()),
            Err(Error::CriterionViolated { .. })
        ));
    }

    #[test]
    fn fourier_identity_small_sample() {
        let s = spec(0.5, 2.0, StableKind::Symmetric, 1);
        let r = fourier_l2_check(&s, 1.0, 1000, 2, FourierOptions { points: 128, cutoff: 200.0 }).unwrap();
        assert!(r.relative_gap < 4.0 * r.truncated_lhs_se / r.rhs + 0.01, "{r:?}");
        let tiny = fourier_l2_check(&s, 1.0, 10, 2, FourierOptions { points: 16, cutoff: 1.0 });
        assert!(matches!(tiny, Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn existence_verdicts() {
        let ladder = ExistenceLadder::default();
        let ok = existence_diagnostic(&spec(0.5, 2.0, StableKind::Symmetric, 1), ladder, 200, 1).unwrap();
        assert_eq!(ok.verdict, ExistenceVerdict::Stabilizes, "{ok:?}");
        let bad = existence_diagnostic(&spec(0.8, 0.6, StableKind::Subordinator, 1), ladder, 200, 1).unwrap();
        assert_eq!(bad.verdict, ExistenceVerdict::Diverges, "{bad:?}");
    }

    #[test]
    fn moment_and_holder_scaling() {
        let s = spec(0.5, 2.0, StableKind::Symmetric, 1);
        let hs = [1.0 / 64.0, 1.0 / 8.0, 1.0];
        let opts = ScalingOptions { points: 64, width_factor: 1.0 };
        let m = moment_scaling_check(&s, 2, &hs, 400, 3, opts).unwrap();
        assert!((m.slope - 1.5).abs() < 0.15, "{m:?}");
        assert!(m.table.iter().all(|r| r.1 > 0.0 && r.1.is_finite()));
        let hv = holder_set_variable(&s, &hs, 400, 4, opts).unwrap();
        assert!((hv.slope - 0.75).abs() < 0.15, "{hv:?}");
        assert_eq!(hv.pigeonhole_violations, 0);
    }

    #[test]
    fn bin_grid_round_trip() {
        let g = BinGrid::new(vec![-1.0, 0.0], 0.5, vec![4, 3]).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.index(&g.centre(k)), Some(k));
        }
        assert_eq!(g.index(&[5.0, 0.0]), None);
        assert!(BinGrid::new(vec![0.0], 1e-9, vec![usize::MAX / 2]).is_err());
        let _ = FbmSpec::new(0.5).unwrap();
        let _ = StableSpec::symmetric(1.0, 1.0).unwrap();
    }
}
